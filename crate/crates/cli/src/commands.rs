//! Subcommand bodies.

use std::path::Path;
use std::sync::Arc;

use gread::analysis::{energy_evolution, export_embeddings, log_log_slope, scaling_bench, sweep as run_sweep, BenchOptions};
use gread::datagen::{generate_csbm, generate_homophily_graph, stratified_split, CsbmConfig, FeatureSource, HomophilyConfig};
use gread::dynamics::{Coef, Coefficients, OperatorBundle, Reaction};
use gread::graph::{grid_graph, homophily_ratio, symmetric_normalize};
use gread::io::{header, load_dataset, write_csv, write_dataset, DatasetPaths};
use gread::model::{load_checkpoint, save_checkpoint};
use gread::par::{self, ExecMode};
use gread::{fit, LabeledGraph, Matrix, PreparedGraph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DatasetKind, RunConfig};
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn grid_dataset(cfg: &RunConfig) -> Result<LabeledGraph> {
    let (w, h) = (cfg.grid_width, cfg.grid_height);
    let graph = grid_graph(w, h)?;
    let inside = |x: usize, y: usize| 4 * x >= w && 4 * x < 3 * w && 4 * y >= h && 4 * y < 3 * h;
    let labels: Vec<usize> = (0..w * h).map(|v| inside(v % w, v / w) as usize).collect();
    let features = Matrix::from_fn(w * h, 1, |v, _| labels[v] as f64);
    let n_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let split = stratified_split(&labels, n_classes, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    Ok(LabeledGraph::new(graph, features, labels, n_classes, split)?)
}

pub fn build_dataset(cfg: &RunConfig) -> Result<LabeledGraph> {
    Ok(match cfg.dataset {
        DatasetKind::Csbm => generate_csbm(&CsbmConfig {
            n_nodes: cfg.csbm_nodes,
            n_classes: cfg.csbm_classes,
            feat_dim: cfg.csbm_feat_dim,
            mu: cfg.csbm_mu.clone(),
            sigma: cfg.csbm_sigma,
            p_intra: cfg.p_intra,
            p_inter: cfg.p_inter,
            seed: cfg.seed,
        })?,
        DatasetKind::Homophily => {
            let features = if cfg.hom_reference_dir.is_empty() {
                FeatureSource::Gaussian {
                    dim: cfg.hom_feat_dim,
                    separation: cfg.hom_separation,
                    sigma: cfg.hom_sigma,
                }
            } else {
                let dir = Path::new(&cfg.hom_reference_dir);
                FeatureSource::Reference(Arc::new(load_dataset(&DatasetPaths::in_dir(dir), false)?))
            };
            generate_homophily_graph(&HomophilyConfig {
                n_nodes: cfg.hom_nodes,
                n_classes: cfg.hom_classes,
                target_h: cfg.target_h,
                avg_degree: cfg.avg_degree,
                features,
                seed: cfg.seed,
            })?
        }
        DatasetKind::Grid => grid_dataset(cfg)?,
        DatasetKind::Files => {
            if cfg.data_dir.is_empty() {
                return Err(CliError::Config("dataset = \"files\" needs data_dir".into()));
            }
            load_dataset(&DatasetPaths::in_dir(Path::new(&cfg.data_dir)), cfg.lcc)?
        }
    })
}

fn fmt(x: f64) -> String {
    x.to_string()
}

pub fn train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = build_dataset(cfg)?;
    let (n_features, n_nodes) = (data.n_features(), data.n_nodes());
    let mcfg = cfg.model_config(data.n_classes);
    let result = fit(&mcfg, &cfg.train_config(), data)?;
    save_checkpoint(&out.join("checkpoint.json"), &mcfg, &result.best_params, n_features, n_nodes)?;
    write_csv(
        &out.join("history.csv"),
        &header(&["epoch", "train_loss", "val_acc", "test_acc"]),
        result.history.iter().map(|r| {
            [r.epoch.to_string(), fmt(r.train_loss), fmt(r.val_acc), fmt(r.test_acc)]
        }),
    )?;
    let metrics = format!(
        "best_epoch={}\nval_acc={}\ntest_acc={}\n",
        result.best_epoch, result.best_val_acc, result.test_acc
    );
    std::fs::write(out.join("metrics.txt"), &metrics)
        .map_err(|e| CliError::Data(format!("metrics.txt: {e}")))?;
    println!("test_acc={}", result.test_acc);
    Ok(())
}

pub fn generate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = build_dataset(cfg)?;
    write_dataset(out, &data)?;
    println!("nodes={} edges={}", data.n_nodes(), data.graph.n_undirected_edges());
    if cfg.dataset == DatasetKind::Homophily {
        println!("homophily={}", homophily_ratio(&data)?);
    }
    Ok(())
}

pub fn energy(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = build_dataset(cfg)?;
    let kinds = if cfg.energy_reactions.is_empty() {
        vec![cfg.reaction]
    } else {
        cfg.energy_reactions.clone()
    };
    let n = data.n_nodes();
    let ops = OperatorBundle::new(
        symmetric_normalize(&data.graph)?,
        kinds.iter().any(|k| k.needs_square()),
    )?
    .with_h0(data.features.clone());
    let coeffs = Coefficients {
        alpha: Coef::constant(cfg.alpha, n, cfg.energy_alpha),
        beta: Coef::constant(cfg.beta, n, cfg.energy_beta),
    };
    let solver = cfg.solver_config();
    let mut rows = Vec::new();
    for kind in kinds {
        let trace = energy_evolution(kind, &ops, &coeffs, &solver, &data.features, &data.graph, cfg.seed)?;
        println!("{} initial={} final={}", trace.label, trace.initial(), trace.last());
        for (s, e) in trace.steps.iter().zip(&trace.energy) {
            rows.push([s.to_string(), fmt(*e), trace.label.clone()]);
        }
    }
    write_csv(&out.join("energy.csv"), &header(&["step", "energy", "label"]), rows)?;
    Ok(())
}

pub fn sweep(cfg: &RunConfig, out: &Path, jobs: usize) -> Result<()> {
    if cfg.sweep_grid.is_empty() {
        return Err(CliError::Config("sweep_grid is empty".into()));
    }
    let data = PreparedGraph::new(build_dataset(cfg)?)?;
    let mcfg = cfg.model_config(data.data().n_classes);
    let tcfg = cfg.train_config();
    par::set_mode(if jobs == 1 {
        ExecMode::Sequential
    } else {
        ExecMode::Parallel
    });
    let result = par::with_threads(jobs, || {
        run_sweep(cfg.sweep_param, &cfg.sweep_grid, &mcfg, &tcfg, &data, cfg.sweep_seeds)
    })?;
    write_csv(
        &out.join("sweep.csv"),
        &header(&["value", "mean_acc", "std_acc"]),
        result.rows.iter().map(|r| [fmt(r.value), fmt(r.mean_acc), fmt(r.std_acc)]),
    )?;
    write_csv(
        &out.join("sweep_raw.csv"),
        &header(&["value", "seed", "test_acc", "error"]),
        result.cells.iter().map(|c| {
            [
                fmt(c.value),
                c.seed.to_string(),
                c.test_acc.map(fmt).unwrap_or_default(),
                c.error.clone().unwrap_or_default(),
            ]
        }),
    )?;
    for r in &result.rows {
        println!("value={} mean_acc={} std_acc={}", r.value, r.mean_acc, r.std_acc);
    }
    Ok(())
}

pub fn export(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = build_dataset(cfg)?;
    let (mcfg, params, data) = if cfg.checkpoint.is_empty() {
        let mcfg = cfg.model_config(data.n_classes);
        let prepared = PreparedGraph::new(data.clone())?;
        let result = gread::train::fit_prepared(&mcfg, &cfg.train_config(), &prepared)?;
        (mcfg, result.best_params, prepared)
    } else {
        let (mcfg, params) = load_checkpoint(Path::new(&cfg.checkpoint))?;
        params.check(&mcfg, data.n_features(), data.n_nodes())?;
        (mcfg, params, PreparedGraph::new(data)?)
    };
    let times = if cfg.export_times.is_empty() {
        vec![0.0, mcfg.solver.t_end]
    } else {
        cfg.export_times.clone()
    };
    let labels = &data.data().labels;
    for (t, h) in export_embeddings(&params, &mcfg, &data, &times)? {
        let mut cols = header(&["node", "label"]);
        cols.extend((0..h.cols()).map(|k| format!("c{k}")));
        let path = out.join(format!("embeddings_t{t}.csv"));
        write_csv(
            &path,
            &cols,
            (0..h.rows()).map(|i| {
                [i.to_string(), labels[i].to_string()]
                    .into_iter()
                    .chain(h.row(i).iter().copied().map(fmt))
            }),
        )?;
        println!("{}", path.display());
    }
    Ok(())
}

fn slug(kind: Reaction) -> String {
    kind.name().replace('*', "star")
}

pub fn bench(cfg: &RunConfig, out: &Path) -> Result<()> {
    let opts = BenchOptions {
        degree: cfg.bench_degree,
        dim: cfg.bench_dim,
        samples: cfg.bench_samples,
        seed: cfg.seed,
        shuffle: cfg.bench_shuffle,
    };
    for &kind in &cfg.bench_reactions {
        let rows = scaling_bench(&cfg.bench_sizes, kind, &opts)?;
        write_csv(
            &out.join(format!("bench_{}.csv", slug(kind))),
            &header(&["edges", "ns_per_step"]),
            rows.iter().map(|r| [r.edges.to_string(), fmt(r.ns_per_step)]),
        )?;
        if rows.len() >= 2 {
            println!("{} slope={}", kind, log_log_slope(&rows));
        }
    }
    Ok(())
}
