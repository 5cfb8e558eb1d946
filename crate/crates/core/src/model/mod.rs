//! Encoder → reaction-diffusion layer → output layer.

mod checkpoint;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};

use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{soft_adjacency_on_pattern, AttentionParams, AttentionScale};
use crate::dense::Matrix;
use crate::dynamics::{
    integrate, Coef, CoefMode, Coefficients, OperatorBundle, Reaction, SolverConfig,
};
use crate::error::{GreadError, Result};
use crate::graph::{symmetric_normalize, LabeledGraph, SparseGraph};

/// Where the diffusion operator comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdjacencyMode {
    /// Symmetric normalized adjacency of the input graph.
    #[serde(rename = "oa")]
    Original,
    /// Attention-generated soft adjacency.
    #[serde(rename = "sa")]
    Soft,
}

impl FromStr for AdjacencyMode {
    type Err = GreadError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oa" | "original" => Ok(AdjacencyMode::Original),
            "sa" | "soft" => Ok(AdjacencyMode::Soft),
            other => Err(GreadError::config(format!("unknown adjacency mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub n_classes: usize,
    pub reaction: Reaction,
    pub adjacency: AdjacencyMode,
    pub alpha_mode: CoefMode,
    pub beta_mode: CoefMode,
    pub solver: SolverConfig,
    pub input_dropout: f64,
    pub dropout: f64,
    /// Key/query width; defaults to `hidden_dim`.
    pub attention_dim: Option<usize>,
    pub attention_scale: AttentionScale,
    pub alpha_init: f64,
    pub beta_init: f64,
    /// When false, α and β keep their initial values during training.
    pub train_coefficients: bool,
}

impl ModelConfig {
    pub fn new(hidden_dim: usize, n_classes: usize, reaction: Reaction, solver: SolverConfig) -> Self {
        ModelConfig {
            hidden_dim,
            n_classes,
            reaction,
            adjacency: AdjacencyMode::Original,
            alpha_mode: CoefMode::Scalar,
            beta_mode: CoefMode::Scalar,
            solver,
            input_dropout: 0.0,
            dropout: 0.0,
            attention_dim: None,
            attention_scale: AttentionScale::SqrtDk,
            alpha_init: 1.0,
            beta_init: 1.0,
            train_coefficients: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.n_classes == 0 {
            return Err(GreadError::config("hidden_dim and n_classes must be at least 1"));
        }
        for (name, p) in [("input_dropout", self.input_dropout), ("dropout", self.dropout)] {
            if !(0.0..1.0).contains(&p) {
                return Err(GreadError::config(format!("{name} must lie in [0, 1), got {p}")));
            }
        }
        if self.reaction == Reaction::GcnStep {
            return Err(GreadError::config(
                "gcn is an analysis baseline and cannot drive the model",
            ));
        }
        if self.attention_dim == Some(0) {
            return Err(GreadError::config("attention_dim must be at least 1"));
        }
        self.solver.validate()
    }

    pub fn d_k(&self) -> usize {
        self.attention_dim.unwrap_or(self.hidden_dim)
    }
}

/// All trainable parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub enc_w1: Matrix,
    pub enc_b1: Vec<f64>,
    pub enc_w2: Matrix,
    pub enc_b2: Vec<f64>,
    pub out_w: Matrix,
    pub out_b: Vec<f64>,
    pub attn: Option<AttentionParams>,
    pub coeffs: Coefficients,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, constant α and β.
    pub fn init<R: Rng + ?Sized>(
        cfg: &ModelConfig,
        n_features: usize,
        n_nodes: usize,
        rng: &mut R,
    ) -> Result<ModelParams> {
        cfg.validate()?;
        let d = cfg.hidden_dim;
        let enc_w1 = Matrix::glorot(n_features, d, rng);
        let enc_w2 = Matrix::glorot(d, d, rng);
        let out_w = Matrix::glorot(d, cfg.n_classes, rng);
        let attn = match cfg.adjacency {
            AdjacencyMode::Original => None,
            AdjacencyMode::Soft => Some(AttentionParams::new(
                Matrix::glorot(d, cfg.d_k(), rng),
                Matrix::glorot(d, cfg.d_k(), rng),
                cfg.attention_scale,
            )?),
        };
        Ok(ModelParams {
            enc_w1,
            enc_b1: vec![0.0; d],
            enc_w2,
            enc_b2: vec![0.0; d],
            out_w,
            out_b: vec![0.0; cfg.n_classes],
            attn,
            coeffs: Coefficients {
                alpha: Coef::constant(cfg.alpha_mode, n_nodes, cfg.alpha_init),
                beta: Coef::constant(cfg.beta_mode, n_nodes, cfg.beta_init),
            },
        })
    }

    /// Same shapes, every entry zero.
    pub fn zeros_like(&self) -> ModelParams {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    /// Flat views in declared order.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        let mut v: Vec<(&'static str, &[f64])> = vec![
            ("enc_w1", self.enc_w1.as_slice()),
            ("enc_b1", &self.enc_b1),
            ("enc_w2", self.enc_w2.as_slice()),
            ("enc_b2", &self.enc_b2),
            ("out_w", self.out_w.as_slice()),
            ("out_b", &self.out_b),
        ];
        if let Some(a) = &self.attn {
            v.push(("attn_w_key", a.w_key.as_slice()));
            v.push(("attn_w_query", a.w_query.as_slice()));
        }
        v.push(("alpha", self.coeffs.alpha.values()));
        v.push(("beta", self.coeffs.beta.values()));
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut v: Vec<(&'static str, &mut [f64])> = vec![
            ("enc_w1", self.enc_w1.as_mut_slice()),
            ("enc_b1", &mut self.enc_b1),
            ("enc_w2", self.enc_w2.as_mut_slice()),
            ("enc_b2", &mut self.enc_b2),
            ("out_w", self.out_w.as_mut_slice()),
            ("out_b", &mut self.out_b),
        ];
        if let Some(a) = &mut self.attn {
            v.push(("attn_w_key", a.w_key.as_mut_slice()));
            v.push(("attn_w_query", a.w_query.as_mut_slice()));
        }
        v.push(("alpha", self.coeffs.alpha.values_mut()));
        v.push(("beta", self.coeffs.beta.values_mut()));
        v
    }

    /// Shapes in declared order, matching [`ModelParams::tensors`].
    pub fn shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let mut v = vec![
            ("enc_w1", vec![self.enc_w1.rows(), self.enc_w1.cols()]),
            ("enc_b1", vec![self.enc_b1.len()]),
            ("enc_w2", vec![self.enc_w2.rows(), self.enc_w2.cols()]),
            ("enc_b2", vec![self.enc_b2.len()]),
            ("out_w", vec![self.out_w.rows(), self.out_w.cols()]),
            ("out_b", vec![self.out_b.len()]),
        ];
        if let Some(a) = &self.attn {
            v.push(("attn_w_key", vec![a.w_key.rows(), a.w_key.cols()]));
            v.push(("attn_w_query", vec![a.w_query.rows(), a.w_query.cols()]));
        }
        v.push(("alpha", vec![self.coeffs.alpha.values().len()]));
        v.push(("beta", vec![self.coeffs.beta.values().len()]));
        v
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Checks parameter shapes against a config and a dataset.
    pub fn check(&self, cfg: &ModelConfig, n_features: usize, n_nodes: usize) -> Result<()> {
        let d = cfg.hidden_dim;
        let ok = self.enc_w1.shape() == (n_features, d)
            && self.enc_b1.len() == d
            && self.enc_w2.shape() == (d, d)
            && self.enc_b2.len() == d
            && self.out_w.shape() == (d, cfg.n_classes)
            && self.out_b.len() == cfg.n_classes
            && self.coeffs.alpha.mode() == cfg.alpha_mode
            && self.coeffs.beta.mode() == cfg.beta_mode
            && match (&self.attn, cfg.adjacency) {
                (None, AdjacencyMode::Original) => true,
                (Some(a), AdjacencyMode::Soft) => {
                    a.w_key.shape() == (d, cfg.d_k()) && a.w_query.shape() == (d, cfg.d_k())
                }
                _ => false,
            };
        if !ok {
            return Err(GreadError::shape("parameters do not match the model configuration"));
        }
        self.coeffs.validate(n_nodes)
    }
}

/// Graph-dependent operators computed once per dataset.
#[derive(Debug)]
pub struct PreparedGraph {
    data: LabeledGraph,
    normalized: OperatorBundle,
    normalized_square: OnceLock<Arc<SparseGraph>>,
    attention_pattern: OnceLock<SparseGraph>,
}

impl PreparedGraph {
    pub fn new(data: LabeledGraph) -> Result<PreparedGraph> {
        let a = symmetric_normalize(&data.graph)?;
        Ok(PreparedGraph {
            normalized: OperatorBundle::new(a, false)?,
            data,
            normalized_square: OnceLock::new(),
            attention_pattern: OnceLock::new(),
        })
    }

    pub fn data(&self) -> &LabeledGraph {
        &self.data
    }

    pub fn n_nodes(&self) -> usize {
        self.data.n_nodes()
    }

    /// Operators built from the normalized adjacency `A`.
    pub fn normalized_operators(&self, with_square: bool) -> OperatorBundle {
        let mut ops = self.normalized.clone();
        if with_square {
            let sq = self
                .normalized_square
                .get_or_init(|| Arc::new(self.normalized.adjacency.square()));
            ops.adjacency_squared = Some(Arc::clone(sq));
        }
        ops
    }

    /// Raw edges plus self-loops: the support of the soft adjacency.
    pub fn attention_pattern(&self) -> &SparseGraph {
        self.attention_pattern
            .get_or_init(|| self.data.graph.with_self_loops())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, masks drawn from `seed`; the state trace is kept.
    Train { seed: u64 },
    /// No dropout.
    Eval,
}

/// Intermediate values needed by the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub input_mask: Option<Vec<f64>>,
    pub x_in: Matrix,
    pub z1: Matrix,
    pub h1: Matrix,
    pub z2: Matrix,
    pub ops: OperatorBundle,
    pub attention: Option<(Matrix, Matrix)>,
    pub trace: Option<Vec<Matrix>>,
    pub final_state: Matrix,
    pub output_mask: Option<Vec<f64>>,
    pub out_in: Matrix,
}

impl ForwardCache {
    /// Encoder output `H(0)`.
    pub fn h0(&self) -> &Matrix {
        self.ops.h0.as_ref().expect("forward always installs H(0)")
    }
}

fn dropout_mask<R: Rng + ?Sized>(len: usize, p: f64, rng: &mut R) -> Option<Vec<f64>> {
    if p == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect(),
    )
}

fn apply_mask(m: &Matrix, mask: Option<&[f64]>) -> Matrix {
    match mask {
        None => m.clone(),
        Some(mask) => {
            let mut out = m.clone();
            for (v, &k) in out.as_mut_slice().iter_mut().zip(mask) {
                *v *= k;
            }
            out
        }
    }
}

fn affine(x: &Matrix, w: &Matrix, b: &[f64]) -> Result<Matrix> {
    let mut z = x.matmul(w)?;
    z.add_row_vector(b)?;
    Ok(z)
}

/// Runs the network; `keep_trace` records every integrator state.
pub fn forward_traced(
    cfg: &ModelConfig,
    params: &ModelParams,
    data: &PreparedGraph,
    mode: Mode,
    keep_trace: bool,
) -> Result<(Matrix, ForwardCache)> {
    cfg.validate()?;
    let x = &data.data.features;
    params.check(cfg, x.cols(), data.n_nodes())?;
    let (p_in, p_out) = match mode {
        Mode::Train { .. } => (cfg.input_dropout, cfg.dropout),
        Mode::Eval => (0.0, 0.0),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(match mode {
        Mode::Train { seed } => seed,
        Mode::Eval => 0,
    });

    let input_mask = dropout_mask(x.as_slice().len(), p_in, &mut rng);
    let x_in = apply_mask(x, input_mask.as_deref());
    let z1 = affine(&x_in, &params.enc_w1, &params.enc_b1)?;
    let h1 = z1.map(|v| v.max(0.0));
    let z2 = affine(&h1, &params.enc_w2, &params.enc_b2)?;
    let h0 = z2.map(|v| v.max(0.0));

    let needs_square = cfg.reaction.needs_square();
    let (ops, attention) = match (cfg.adjacency, &params.attn) {
        (AdjacencyMode::Soft, Some(attn)) => {
            let soft = soft_adjacency_on_pattern(attn, data.attention_pattern(), &h0)?;
            let ops = OperatorBundle::new(soft.adjacency, needs_square)?;
            (ops, Some((soft.keys, soft.queries)))
        }
        _ => (data.normalized_operators(needs_square), None),
    };
    let ops = ops.with_h0(h0.clone());

    let traj = integrate(cfg.reaction, &ops, &params.coeffs, &cfg.solver, &h0, keep_trace)
        .map_err(|e| e.with_context("reaction-diffusion layer"))?;

    let output_mask = dropout_mask(traj.state.as_slice().len(), p_out, &mut rng);
    let out_in = apply_mask(&traj.state, output_mask.as_deref());
    let logits = affine(&out_in, &params.out_w, &params.out_b)?;

    Ok((
        logits,
        ForwardCache {
            input_mask,
            x_in,
            z1,
            h1,
            z2,
            ops,
            attention,
            trace: traj.trace,
            final_state: traj.state,
            output_mask,
            out_in,
        },
    ))
}

/// Logits for every node. Train mode keeps the integrator trace for backprop.
pub fn forward(
    cfg: &ModelConfig,
    params: &ModelParams,
    data: &PreparedGraph,
    mode: Mode,
) -> Result<(Matrix, ForwardCache)> {
    forward_traced(cfg, params, data, mode, matches!(mode, Mode::Train { .. }))
}

/// Eval-mode class predictions; ties go to the lowest class index.
pub fn predict(cfg: &ModelConfig, params: &ModelParams, data: &PreparedGraph) -> Result<Vec<usize>> {
    let (logits, _) = forward(cfg, params, data, Mode::Eval)?;
    Ok(logits.argmax_rows())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Solver;
    use crate::graph::Split;

    fn toy_data() -> PreparedGraph {
        let g = SparseGraph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)])
            .unwrap();
        let x = Matrix::from_fn(5, 3, |i, j| ((i * 3 + j) as f64 * 0.7).sin());
        let d = LabeledGraph::new(g, x, vec![0, 1, 0, 1, 1], 2, Split::all_train(5)).unwrap();
        PreparedGraph::new(d).unwrap()
    }

    fn cfg(reaction: Reaction, adjacency: AdjacencyMode) -> ModelConfig {
        let mut c = ModelConfig::new(4, 2, reaction, SolverConfig::new(Solver::Rk4, 0.5, 1.0).unwrap());
        c.adjacency = adjacency;
        c.input_dropout = 0.3;
        c.dropout = 0.2;
        c
    }

    fn params(c: &ModelConfig, data: &PreparedGraph, seed: u64) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ModelParams::init(c, data.data().n_features(), data.n_nodes(), &mut rng).unwrap()
    }

    #[test]
    fn frozen_flow_logits_equal_encoder_then_output() {
        let data = toy_data();
        let mut c = cfg(Reaction::Fisher, AdjacencyMode::Original);
        c.input_dropout = 0.0;
        c.dropout = 0.0;
        c.alpha_init = 0.0;
        c.beta_init = 0.0;
        let p = params(&c, &data, 3);
        let (logits, cache) = forward(&c, &p, &data, Mode::Eval).unwrap();
        assert_eq!(&cache.final_state, cache.h0());
        let enc = affine(&data.data().features, &p.enc_w1, &p.enc_b1)
            .unwrap()
            .map(|v| v.max(0.0));
        let enc = affine(&enc, &p.enc_w2, &p.enc_b2).unwrap().map(|v| v.max(0.0));
        let expected = affine(&enc, &p.out_w, &p.out_b).unwrap();
        assert_eq!(logits, expected);
        assert_eq!(predict(&c, &p, &data).unwrap(), expected.argmax_rows());
    }

    #[test]
    fn train_mode_is_seed_deterministic() {
        let data = toy_data();
        let c = cfg(Reaction::BlurringSharpening, AdjacencyMode::Soft);
        let p = params(&c, &data, 4);
        let a = forward(&c, &p, &data, Mode::Train { seed: 9 }).unwrap().0;
        let b = forward(&c, &p, &data, Mode::Train { seed: 9 }).unwrap().0;
        assert_eq!(a.as_slice(), b.as_slice());
        let other = forward(&c, &p, &data, Mode::Train { seed: 10 }).unwrap().0;
        assert_ne!(a, other);
        let e1 = forward(&c, &p, &data, Mode::Eval).unwrap().0;
        let e2 = forward(&c, &p, &data, Mode::Eval).unwrap().0;
        assert_eq!(e1.as_slice(), e2.as_slice());
    }

    #[test]
    fn single_node_bs_with_self_attention_is_stationary() {
        let g = SparseGraph::from_edges(1, &[]).unwrap();
        let d = LabeledGraph::new(g, Matrix::from_rows(&[[0.4, -1.0]]), vec![0], 1, Split::all_train(1))
            .unwrap();
        let data = PreparedGraph::new(d).unwrap();
        let mut c = cfg(Reaction::BlurringSharpening, AdjacencyMode::Soft);
        c.n_classes = 1;
        let p = params(&c, &data, 5);
        let (_, cache) = forward(&c, &p, &data, Mode::Eval).unwrap();
        assert_eq!(cache.ops.adjacency.get(0, 0), 1.0);
        assert_eq!(&cache.final_state, cache.h0());
    }

    #[test]
    fn diffusion_only_ignores_beta() {
        let data = toy_data();
        let c = cfg(Reaction::DiffusionOnly, AdjacencyMode::Original);
        let p = params(&c, &data, 6);
        let mut q = p.clone();
        q.coeffs.beta = Coef::scalar(7.0);
        let a = forward(&c, &p, &data, Mode::Train { seed: 1 }).unwrap().0;
        let b = forward(&c, &q, &data, Mode::Train { seed: 1 }).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn original_mode_has_no_attention() {
        let data = toy_data();
        let c = cfg(Reaction::Fisher, AdjacencyMode::Original);
        let p = params(&c, &data, 7);
        assert!(p.attn.is_none());
        let s = cfg(Reaction::Fisher, AdjacencyMode::Soft);
        let q = params(&s, &data, 7);
        let (_, cache) = forward(&s, &q, &data, Mode::Eval).unwrap();
        assert_eq!(cache.ops.adjacency.nnz(), data.data().graph.nnz() + data.n_nodes());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let data = toy_data();
        let c = cfg(Reaction::Fisher, AdjacencyMode::Original);
        let mut p = params(&c, &data, 8);
        p.enc_b1.pop();
        assert!(forward(&c, &p, &data, Mode::Eval).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(Reaction::Fisher, AdjacencyMode::Original);
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        let g = cfg(Reaction::GcnStep, AdjacencyMode::Original);
        assert!(g.validate().is_err());
    }
}
