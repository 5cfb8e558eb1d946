//! Dirichlet energy traces, sensitivity sweeps, embedding snapshots and a
//! per-step timing bench.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::Matrix;
use crate::dynamics::{gcn_step_baseline, integrate, rhs, Coefficients, OperatorBundle, Reaction, SolverConfig};
use crate::error::{GreadError, Result};
use crate::graph::{symmetric_normalize, SparseGraph};
use crate::model::{forward_traced, Mode, ModelConfig, ModelParams, PreparedGraph};
use crate::par;
use crate::train::{fit_prepared, TrainConfig};

/// `(1/N) Σ_i Σ_{j∈N(i)} A[i,j]·‖H_i − H_j‖²` with raw edge weights.
pub fn dirichlet_energy(g: &SparseGraph, h: &Matrix) -> Result<f64> {
    if h.rows() != g.n_nodes() {
        return Err(GreadError::shape(format!(
            "{} rows for {} nodes",
            h.rows(),
            g.n_nodes()
        )));
    }
    if g.n_nodes() == 0 {
        return Ok(0.0);
    }
    let per_row = par::map_indexed(g.n_nodes(), g.nnz() * h.cols(), |i| {
        g.row(i)
            .map(|(j, w)| {
                let d: f64 = h.row(i).iter().zip(h.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                w * d
            })
            .sum::<f64>()
    });
    Ok(per_row.iter().sum::<f64>() / g.n_nodes() as f64)
}

/// Energy after every step of one dynamics run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub steps: Vec<usize>,
    pub energy: Vec<f64>,
    pub label: String,
}

impl EnergyTrace {
    pub fn len(&self) -> usize {
        self.energy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energy.is_empty()
    }

    pub fn initial(&self) -> f64 {
        self.energy[0]
    }

    pub fn last(&self) -> f64 {
        *self.energy.last().expect("trace holds H(0)")
    }
}

/// Energy over `H(0), ..., H(n_steps)` under `kind`.
///
/// [`Reaction::GcnStep`] applies `n_steps` discrete GCN layers, each with a
/// fresh Glorot weight drawn from `seed`. Every other kind integrates the
/// continuous dynamics with tracing.
pub fn energy_evolution(
    kind: Reaction,
    ops: &OperatorBundle,
    coeffs: &Coefficients,
    cfg: &SolverConfig,
    h0: &Matrix,
    g_raw: &SparseGraph,
    seed: u64,
) -> Result<EnergyTrace> {
    cfg.validate()?;
    let states = if kind == Reaction::GcnStep {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut states = vec![h0.clone()];
        for _ in 0..cfg.n_steps() {
            let w = Matrix::glorot(h0.cols(), h0.cols(), &mut rng);
            let next = gcn_step_baseline(ops, states.last().expect("nonempty"), &w)?;
            states.push(next);
        }
        states
    } else {
        let with_h0;
        let ops = if ops.h0.is_none() {
            with_h0 = ops.with_h0(h0.clone());
            &with_h0
        } else {
            ops
        };
        integrate(kind, ops, coeffs, cfg, h0, true)?
            .trace
            .expect("tracing requested")
    };
    let energy = states
        .iter()
        .map(|h| dirichlet_energy(g_raw, h))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnergyTrace {
        steps: (0..energy.len()).collect(),
        energy,
        label: kind.name().to_string(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "T")]
    EndTime,
    #[serde(rename = "tau")]
    StepSize,
}

impl std::str::FromStr for SweepParam {
    type Err = GreadError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T" | "t" | "t_end" => Ok(SweepParam::EndTime),
            "tau" => Ok(SweepParam::StepSize),
            other => Err(GreadError::config(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

/// Outcome of one (grid value, seed) training run.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub value: f64,
    pub seed: u64,
    pub test_acc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub mean_acc: f64,
    /// Population standard deviation over successful seeds.
    pub std_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trains `n_seeds` models per grid value with seeds `tcfg.seed, tcfg.seed+1, ...`.
///
/// Failed cells are recorded with their error and left out of the statistics.
pub fn sweep(
    param: SweepParam,
    grid: &[f64],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    data: &PreparedGraph,
    n_seeds: usize,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(GreadError::config("sweep grid is empty"));
    }
    if n_seeds == 0 {
        return Err(GreadError::config("sweep needs at least one seed"));
    }
    let tasks: Vec<(f64, u64)> = grid
        .iter()
        .flat_map(|&v| (0..n_seeds as u64).map(move |s| (v, s)))
        .collect();
    let cells = par::map_tasks(tasks, |(value, s)| {
        let seed = tcfg.seed.wrapping_add(s);
        let mut m = mcfg.clone();
        match param {
            SweepParam::EndTime => m.solver.t_end = value,
            SweepParam::StepSize => m.solver.tau = value,
        }
        let t = TrainConfig { seed, ..tcfg.clone() };
        match fit_prepared(&m, &t, data) {
            Ok(r) => SweepCell {
                value,
                seed,
                test_acc: Some(r.test_acc),
                error: None,
            },
            Err(e) => SweepCell {
                value,
                seed,
                test_acc: None,
                error: Some(e.to_string()),
            },
        }
    });
    let rows = cells
        .chunks(n_seeds)
        .map(|chunk| {
            let accs: Vec<f64> = chunk.iter().filter_map(|c| c.test_acc).collect();
            let (mean_acc, std_acc) = mean_std(&accs);
            SweepRow {
                value: chunk[0].value,
                mean_acc,
                std_acc,
            }
        })
        .collect();
    Ok(SweepResult { rows, cells })
}

/// Eval-mode hidden states `H(t)` at the integrator step nearest each time.
pub fn export_embeddings(
    params: &ModelParams,
    cfg: &ModelConfig,
    data: &PreparedGraph,
    times: &[f64],
) -> Result<Vec<(f64, Matrix)>> {
    let t_end = cfg.solver.t_end;
    if let Some(&t) = times
        .iter()
        .find(|&&t| !(t.is_finite() && t >= 0.0 && t <= t_end * (1.0 + 1e-12)))
    {
        return Err(GreadError::config(format!("time {t} outside [0, {t_end}]")));
    }
    let (_, cache) = forward_traced(cfg, params, data, Mode::Eval, true)?;
    let trace = cache.trace.expect("tracing requested");
    Ok(times
        .iter()
        .map(|&t| (t, trace[cfg.solver.step_at(t)].clone()))
        .collect())
}

/// A `k`-regular circulant graph on `n` nodes with randomly permuted ids.
pub fn random_regular_graph(n: usize, k: usize, seed: u64) -> Result<SparseGraph> {
    regular_graph(n, k, Some(seed))
}

/// A `k`-regular circulant graph; `seed` permutes the node ids, `None` keeps
/// node `i` adjacent to `i ± 1..=k/2`.
pub fn regular_graph(n: usize, k: usize, seed: Option<u64>) -> Result<SparseGraph> {
    if !k.is_multiple_of(2) || k >= n {
        return Err(GreadError::config(format!(
            "need an even degree below the node count, got k={k}, n={n}"
        )));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    if let Some(seed) = seed {
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (1..=k / 2).map(move |s| (i, (i + s) % n)))
        .map(|(a, b)| (ids[a], ids[b]))
        .collect();
    SparseGraph::from_edges(n, &edges)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchOptions {
    /// Degree of the generated regular graphs.
    pub degree: usize,
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
    /// Permute node ids, so neighbour reads lose locality.
    pub shuffle: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            degree: 8,
            dim: 16,
            samples: 15,
            seed: 0,
            shuffle: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRow {
    pub edges: usize,
    pub ns_per_step: f64,
}

/// Median wall time of one `rhs` evaluation per requested edge count.
pub fn scaling_bench(sizes: &[usize], kind: Reaction, opts: &BenchOptions) -> Result<Vec<BenchRow>> {
    if sizes.is_empty() {
        return Err(GreadError::config("bench needs at least one size"));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &edges in sizes {
        let n = (2 * edges).div_ceil(opts.degree).max(opts.degree + 1);
        let g = regular_graph(n, opts.degree, opts.shuffle.then_some(opts.seed))?;
        let ops = OperatorBundle::new(symmetric_normalize(&g)?, kind.needs_square())?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let h = Matrix::uniform(n, opts.dim, 1.0, &mut rng);
        let ops = ops.with_h0(h.clone());
        let coeffs = Coefficients::scalar(1.0, 1.0);

        let start = Instant::now();
        std::hint::black_box(rhs(kind, &ops, &coeffs, &h)?);
        let once = start.elapsed().as_secs_f64().max(1e-9);
        let inner = ((2e-3 / once).ceil() as usize).max(1);

        let mut samples = Vec::with_capacity(opts.samples.max(1));
        for _ in 0..opts.samples.max(1) {
            let start = Instant::now();
            for _ in 0..inner {
                std::hint::black_box(rhs(kind, &ops, &coeffs, std::hint::black_box(&h))?);
            }
            samples.push(start.elapsed().as_nanos() as f64 / inner as f64);
        }
        samples.sort_by(f64::total_cmp);
        rows.push(BenchRow {
            edges: g.n_undirected_edges(),
            ns_per_step: samples[samples.len() / 2],
        });
    }
    Ok(rows)
}

/// Least-squares slope of `log(ns)` against `log(edges)`.
pub fn log_log_slope(rows: &[BenchRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.edges as f64).ln(), r.ns_per_step.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Solver;
    use approx::assert_abs_diff_eq;

    fn k2() -> SparseGraph {
        SparseGraph::from_edges(2, &[(0, 1)]).unwrap()
    }

    #[test]
    fn energy_examples() {
        let g = k2();
        let h = Matrix::from_rows(&[[0.0], [1.0]]);
        assert_abs_diff_eq!(dirichlet_energy(&g, &h).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(dirichlet_energy(&g, &Matrix::filled(2, 3, 0.7)).unwrap(), 0.0);
        assert_abs_diff_eq!(dirichlet_energy(&g, &h.scale(3.0)).unwrap(), 9.0, epsilon = 1e-12);
        assert!(dirichlet_energy(&g, &Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn frozen_dynamics_give_constant_trace() {
        let g = SparseGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let ops = OperatorBundle::new(symmetric_normalize(&g).unwrap(), true).unwrap();
        let h0 = Matrix::from_fn(4, 2, |i, j| (i + 2 * j) as f64);
        let cfg = SolverConfig::new(Solver::Euler, 1.0, 5.0).unwrap();
        let tr = energy_evolution(
            Reaction::BlurringSharpening,
            &ops,
            &Coefficients::scalar(0.0, 0.0),
            &cfg,
            &h0,
            &g,
            0,
        )
        .unwrap();
        assert_eq!(tr.len(), 6);
        assert!(tr.energy.iter().all(|&e| e == tr.initial()));
        assert_eq!(tr.initial(), dirichlet_energy(&g, &h0).unwrap());
    }

    #[test]
    fn gcn_curve_is_seeded() {
        let g = SparseGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let ops = OperatorBundle::new(symmetric_normalize(&g).unwrap(), false).unwrap();
        let h0 = Matrix::from_fn(3, 2, |i, j| (i * j) as f64 + 0.5);
        let cfg = SolverConfig::new(Solver::Euler, 1.0, 3.0).unwrap();
        let c = Coefficients::scalar(1.0, 1.0);
        let a = energy_evolution(Reaction::GcnStep, &ops, &c, &cfg, &h0, &g, 9).unwrap();
        let b = energy_evolution(Reaction::GcnStep, &ops, &c, &cfg, &h0, &g, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.label, "gcn");
    }

    #[test]
    fn regular_graph_degrees() {
        let g = random_regular_graph(20, 4, 1).unwrap();
        assert!((0..20).all(|i| g.degree(i) == 4));
        assert_eq!(g.n_undirected_edges(), 40);
        assert!(random_regular_graph(4, 4, 0).is_err());
        let plain = regular_graph(20, 4, None).unwrap();
        assert_eq!(plain.neighbors(0), &[1, 2, 18, 19]);
        assert_eq!(plain.n_undirected_edges(), 40);
    }

    #[test]
    fn mean_std_population() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    #[test]
    fn slope_of_linear_rows() {
        let rows: Vec<BenchRow> = [1000, 2000, 4000]
            .iter()
            .map(|&e| BenchRow {
                edges: e,
                ns_per_step: 3.0 * e as f64,
            })
            .collect();
        assert_abs_diff_eq!(log_log_slope(&rows), 1.0, epsilon = 1e-12);
    }
}
