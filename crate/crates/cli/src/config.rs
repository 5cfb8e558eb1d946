//! Flat run configuration shared by every subcommand.

use std::path::Path;

use gread::analysis::SweepParam;
use gread::attention::AttentionScale;
use gread::dynamics::{CoefMode, Reaction, Solver, SolverConfig};
use gread::{AdjacencyMode, ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

include!(concat!(env!("OUT_DIR"), "/presets.rs"));

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Csbm,
    Homophily,
    Grid,
    Files,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    pub dataset: DatasetKind,
    pub data_dir: String,
    pub lcc: bool,

    pub csbm_nodes: usize,
    pub csbm_classes: usize,
    pub csbm_feat_dim: usize,
    pub csbm_mu: Vec<f64>,
    pub csbm_sigma: f64,
    pub p_intra: f64,
    pub p_inter: f64,

    pub hom_nodes: usize,
    pub hom_classes: usize,
    pub target_h: f64,
    pub avg_degree: f64,
    pub hom_feat_dim: usize,
    pub hom_separation: f64,
    pub hom_sigma: f64,
    /// Dataset directory whose rows seed the node features; empty means Gaussian features.
    pub hom_reference_dir: String,

    pub grid_width: usize,
    pub grid_height: usize,

    pub reaction: Reaction,
    pub adjacency: AdjacencyMode,
    pub alpha: CoefMode,
    pub beta: CoefMode,
    pub solver: Solver,
    pub tau: f64,
    pub t_end: f64,
    pub hidden_dim: usize,
    pub input_dropout: f64,
    pub dropout: f64,
    /// 0 means `hidden_dim`.
    pub attention_dim: usize,
    pub attention_scale: AttentionScale,
    pub alpha_init: f64,
    pub beta_init: f64,
    pub train_coefficients: bool,

    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// 0 disables early stopping.
    pub patience: usize,

    pub sweep_param: SweepParam,
    pub sweep_grid: Vec<f64>,
    pub sweep_seeds: usize,

    /// Empty means `[0, t_end]`.
    pub export_times: Vec<f64>,
    /// Checkpoint to export from; empty trains a fresh model.
    pub checkpoint: String,

    /// Empty means `[reaction]`.
    pub energy_reactions: Vec<Reaction>,
    pub energy_alpha: f64,
    pub energy_beta: f64,

    pub bench_sizes: Vec<usize>,
    pub bench_reactions: Vec<Reaction>,
    pub bench_degree: usize,
    pub bench_dim: usize,
    pub bench_samples: usize,
    pub bench_shuffle: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            dataset: DatasetKind::Csbm,
            data_dir: String::new(),
            lcc: false,
            csbm_nodes: 100,
            csbm_classes: 2,
            csbm_feat_dim: 2,
            csbm_mu: vec![-0.5, 0.5],
            csbm_sigma: 2.0,
            p_intra: 0.9,
            p_inter: 0.1,
            hom_nodes: 1480,
            hom_classes: 5,
            target_h: 0.5,
            avg_degree: 3.98,
            hom_feat_dim: 16,
            hom_separation: 1.0,
            hom_sigma: 1.0,
            hom_reference_dir: String::new(),
            grid_width: 20,
            grid_height: 20,
            reaction: Reaction::BlurringSharpening,
            adjacency: AdjacencyMode::Original,
            alpha: CoefMode::Scalar,
            beta: CoefMode::Scalar,
            solver: Solver::Euler,
            tau: 1.0,
            t_end: 1.0,
            hidden_dim: 64,
            input_dropout: 0.0,
            dropout: 0.0,
            attention_dim: 0,
            attention_scale: AttentionScale::SqrtDk,
            alpha_init: 1.0,
            beta_init: 1.0,
            train_coefficients: true,
            lr: 0.01,
            weight_decay: 0.0005,
            epochs: 100,
            patience: 0,
            sweep_param: SweepParam::EndTime,
            sweep_grid: Vec::new(),
            sweep_seeds: 3,
            export_times: Vec::new(),
            checkpoint: String::new(),
            energy_reactions: Vec::new(),
            energy_alpha: 1.0,
            energy_beta: 1.0,
            bench_sizes: vec![5000, 10000, 20000, 40000, 80000],
            bench_reactions: vec![Reaction::Fisher, Reaction::BlurringSharpening],
            bench_degree: 8,
            bench_dim: 16,
            bench_samples: 15,
            bench_shuffle: false,
        }
    }
}

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, body)| *body)
}

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Parses an override value as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("single key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Loads `source` (a file path or a preset name), then applies `key=value` overrides.
pub fn resolve(source: Option<&str>, overrides: &[String], seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut table = match source {
        None => toml::Table::new(),
        Some(s) => {
            let text = if Path::new(s).is_file() {
                std::fs::read_to_string(s).map_err(|e| CliError::Config(format!("{s}: {e}")))?
            } else if let Some(body) = preset(s) {
                body.to_string()
            } else {
                return Err(CliError::Config(format!(
                    "{s}: neither a readable file nor a shipped preset"
                )));
            };
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Config(format!("{s}: {e}")))?
        }
    };
    for o in overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {o:?} is not key=value")))?;
        table.insert(key.trim().to_string(), parse_value(value.trim()));
    }
    if let Some(s) = seed {
        let s = i64::try_from(s).map_err(|_| CliError::Config(format!("seed {s} exceeds i64")))?;
        table.insert("seed".into(), toml::Value::Integer(s));
    }
    let cfg: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    Ok(cfg)
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            method: self.solver,
            tau: self.tau,
            t_end: self.t_end,
        }
    }

    pub fn model_config(&self, n_classes: usize) -> ModelConfig {
        ModelConfig {
            hidden_dim: self.hidden_dim,
            n_classes,
            reaction: self.reaction,
            adjacency: self.adjacency,
            alpha_mode: self.alpha,
            beta_mode: self.beta,
            solver: self.solver_config(),
            input_dropout: self.input_dropout,
            dropout: self.dropout,
            attention_dim: (self.attention_dim > 0).then_some(self.attention_dim),
            attention_scale: self.attention_scale,
            alpha_init: self.alpha_init,
            beta_init: self.beta_init,
            train_coefficients: self.train_coefficients,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            max_epochs: self.epochs,
            seed: self.seed,
            patience: (self.patience > 0).then_some(self.patience),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for name in preset_names() {
            resolve(Some(name), &[], None).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(preset_names().count() >= 63);
    }

    #[test]
    fn echo_round_trips() {
        let cfg = resolve(Some("gread-bs-texas"), &["sweep_grid=[0.5, 1]".into()], Some(7)).unwrap();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.sweep_grid, vec![0.5, 1.0]);
    }

    #[test]
    fn bare_strings_and_numbers() {
        let cfg = resolve(None, &["reaction=fb*".into(), "tau=2".into(), "lcc=true".into()], None).unwrap();
        assert_eq!(cfg.reaction, Reaction::FilterBankStar);
        assert_eq!(cfg.tau, 2.0);
        assert!(cfg.lcc);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = resolve(None, &["learning_rate=0.1".into()], None).unwrap_err();
        assert!(e.to_string().contains("learning_rate"), "{e}");
    }
}
