//! Reaction terms, the reaction-diffusion vector field and fixed-step integrators.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dense::Matrix;
use crate::error::{GreadError, Result};
use crate::graph::{laplacian, SparseGraph};

/// Selects the dynamics `dH/dt = -α·L·H + β·r(H)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Reaction {
    /// Fisher: `H ⊙ (1 - H)`.
    Fisher,
    /// Allen-Cahn: `H ⊙ (1 - H∘²)`.
    AllenCahn,
    /// Zeldovich: `H ⊙ (H - H∘²)`.
    Zeldovich,
    /// Blurring-sharpening: `(Ã - Ã²) H`.
    BlurringSharpening,
    /// Source term: `H(0)`.
    Source,
    /// Filter bank: `L H`.
    FilterBank,
    /// Filter bank with identity channel: `L H + H`.
    FilterBankStar,
    /// No reaction; diffusion with a learned coefficient only.
    DiffusionOnly,
    /// Discrete `ReLU((I - L) H W)` layers; not a continuous vector field.
    GcnStep,
}

impl Reaction {
    /// The seven reaction terms, in declaration order.
    pub const REACTIONS: [Reaction; 7] = [
        Reaction::Fisher,
        Reaction::AllenCahn,
        Reaction::Zeldovich,
        Reaction::BlurringSharpening,
        Reaction::Source,
        Reaction::FilterBank,
        Reaction::FilterBankStar,
    ];

    pub fn needs_square(self) -> bool {
        self == Reaction::BlurringSharpening
    }

    pub fn name(self) -> &'static str {
        match self {
            Reaction::Fisher => "f",
            Reaction::AllenCahn => "ac",
            Reaction::Zeldovich => "z",
            Reaction::BlurringSharpening => "bs",
            Reaction::Source => "st",
            Reaction::FilterBank => "fb",
            Reaction::FilterBankStar => "fb*",
            Reaction::DiffusionOnly => "diffusion",
            Reaction::GcnStep => "gcn",
        }
    }
}

impl fmt::Display for Reaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Reaction {
    type Err = GreadError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "f" | "fisher" => Reaction::Fisher,
            "ac" | "allen-cahn" | "allen_cahn" => Reaction::AllenCahn,
            "z" | "zeldovich" => Reaction::Zeldovich,
            "bs" | "blurring-sharpening" => Reaction::BlurringSharpening,
            "st" | "source" => Reaction::Source,
            "fb" | "filter-bank" => Reaction::FilterBank,
            "fb*" | "fbstar" | "fb_star" => Reaction::FilterBankStar,
            "diffusion" | "diffusion-only" | "grand" => Reaction::DiffusionOnly,
            "gcn" | "gcn-step" => Reaction::GcnStep,
            other => return Err(GreadError::config(format!("unknown reaction '{other}'"))),
        })
    }
}

impl TryFrom<String> for Reaction {
    type Error = GreadError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Reaction> for String {
    fn from(r: Reaction) -> String {
        r.name().to_string()
    }
}

/// Fixed operators shared by every evaluation of the vector field.
///
/// `adjacency` is either the normalized adjacency `A` or a soft adjacency `Ã`.
#[derive(Clone, Debug)]
pub struct OperatorBundle {
    pub adjacency: Arc<SparseGraph>,
    pub adjacency_t: Arc<SparseGraph>,
    pub laplacian: Arc<SparseGraph>,
    pub adjacency_squared: Option<Arc<SparseGraph>>,
    pub h0: Option<Matrix>,
}

impl OperatorBundle {
    /// Derives `L = I - adjacency`, the transpose and (optionally) `adjacency²`.
    pub fn new(adjacency: SparseGraph, with_square: bool) -> Result<OperatorBundle> {
        let lap = laplacian(&adjacency)?;
        let square = with_square.then(|| Arc::new(adjacency.square()));
        Ok(OperatorBundle {
            adjacency_t: Arc::new(adjacency.transpose()),
            adjacency: Arc::new(adjacency),
            laplacian: Arc::new(lap),
            adjacency_squared: square,
            h0: None,
        })
    }

    pub fn with_h0(&self, h0: Matrix) -> OperatorBundle {
        OperatorBundle {
            h0: Some(h0),
            ..self.clone()
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.n_nodes()
    }

    fn square(&self) -> Result<&SparseGraph> {
        self.adjacency_squared
            .as_deref()
            .ok_or(GreadError::MissingOperator("adjacency_squared"))
    }

    fn initial_state(&self) -> Result<&Matrix> {
        self.h0.as_ref().ok_or(GreadError::MissingOperator("h0"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoefMode {
    /// One value shared by all nodes.
    #[serde(rename = "sc")]
    Scalar,
    /// One value per node, broadcast across channels.
    #[serde(rename = "vc")]
    PerNode,
}

impl FromStr for CoefMode {
    type Err = GreadError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sc" | "scalar" => Ok(CoefMode::Scalar),
            "vc" | "vector" | "per-node" => Ok(CoefMode::PerNode),
            other => Err(GreadError::config(format!("unknown coefficient mode '{other}'"))),
        }
    }
}

/// A trainable coefficient, scalar or one entry per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coef {
    mode: CoefMode,
    values: Vec<f64>,
}

impl Coef {
    pub fn scalar(v: f64) -> Coef {
        Coef {
            mode: CoefMode::Scalar,
            values: vec![v],
        }
    }

    pub fn per_node(values: Vec<f64>) -> Coef {
        Coef {
            mode: CoefMode::PerNode,
            values,
        }
    }

    pub fn constant(mode: CoefMode, n_nodes: usize, v: f64) -> Coef {
        match mode {
            CoefMode::Scalar => Coef::scalar(v),
            CoefMode::PerNode => Coef::per_node(vec![v; n_nodes]),
        }
    }

    pub fn mode(&self) -> CoefMode {
        self.mode
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, node: usize) -> f64 {
        match self.mode {
            CoefMode::Scalar => self.values[0],
            CoefMode::PerNode => self.values[node],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    fn check(&self, n: usize, name: &str) -> Result<()> {
        let expected = match self.mode {
            CoefMode::Scalar => 1,
            CoefMode::PerNode => n,
        };
        if self.values.len() != expected {
            return Err(GreadError::shape(format!(
                "{name} has {} values, expected {expected}",
                self.values.len()
            )));
        }
        Ok(())
    }

    /// Scales every entry of row `i` by this coefficient's value for node `i`.
    pub fn apply(&self, m: &Matrix) -> Matrix {
        match self.mode {
            CoefMode::Scalar => m.scale(self.values[0]),
            CoefMode::PerNode => m.scale_rows(&self.values).expect("length checked"),
        }
    }
}

/// Diffusion (`alpha`) and reaction (`beta`) weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub alpha: Coef,
    pub beta: Coef,
}

impl Coefficients {
    pub fn scalar(alpha: f64, beta: f64) -> Coefficients {
        Coefficients {
            alpha: Coef::scalar(alpha),
            beta: Coef::scalar(beta),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.alpha.check(n, "alpha")?;
        self.beta.check(n, "beta")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Euler,
    Rk4,
}

impl FromStr for Solver {
    type Err = GreadError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Solver::Euler),
            "rk4" => Ok(Solver::Rk4),
            other => Err(GreadError::config(format!(
                "unknown solver '{other}' (expected euler or rk4)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Solver,
    /// Step size τ.
    pub tau: f64,
    /// Terminal time T.
    pub t_end: f64,
}

impl SolverConfig {
    pub fn new(method: Solver, tau: f64, t_end: f64) -> Result<SolverConfig> {
        let cfg = SolverConfig { method, tau, t_end };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(GreadError::config(format!("step size must be positive, got {}", self.tau)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(GreadError::config(format!(
                "terminal time must be positive, got {}",
                self.t_end
            )));
        }
        Ok(())
    }

    /// `max(1, round(T / τ))`.
    pub fn n_steps(&self) -> usize {
        ((self.t_end / self.tau).round() as usize).max(1)
    }

    /// Trace index closest to time `t`, on the grid `k · T / n_steps`.
    pub fn step_at(&self, t: f64) -> usize {
        let n = self.n_steps();
        ((t / self.t_end * n as f64).round() as usize).min(n)
    }
}

fn check_shape(ops: &OperatorBundle, h: &Matrix) -> Result<()> {
    if h.rows() != ops.n_nodes() {
        return Err(GreadError::shape(format!(
            "state has {} rows for {} nodes",
            h.rows(),
            ops.n_nodes()
        )));
    }
    Ok(())
}

/// Evaluates the reaction term `r(H)`.
pub fn reaction(kind: Reaction, ops: &OperatorBundle, h: &Matrix) -> Result<Matrix> {
    check_shape(ops, h)?;
    match kind {
        Reaction::Fisher => Ok(h.map(|x| x * (1.0 - x))),
        Reaction::AllenCahn => Ok(h.map(|x| x * (1.0 - x * x))),
        Reaction::Zeldovich => Ok(h.map(|x| x * (x - x * x))),
        Reaction::BlurringSharpening => {
            let blurred = ops.adjacency.spmm(h)?;
            let twice = ops.square()?.spmm(h)?;
            blurred.sub(&twice)
        }
        Reaction::Source => {
            let h0 = ops.initial_state()?;
            if h0.shape() != h.shape() {
                return Err(GreadError::shape("H(0) and H(t) differ in shape"));
            }
            Ok(h0.clone())
        }
        Reaction::FilterBank => ops.laplacian.spmm(h),
        Reaction::FilterBankStar => ops.laplacian.spmm(h)?.add(h),
        Reaction::DiffusionOnly => Ok(Matrix::zeros(h.rows(), h.cols())),
        Reaction::GcnStep => Err(GreadError::config(
            "the GCN-step baseline is a discrete layer, not a reaction term",
        )),
    }
}

/// `f(H) = -α ∘ (L H) + β ∘ r(H)`.
pub fn rhs(
    kind: Reaction,
    ops: &OperatorBundle,
    coeffs: &Coefficients,
    h: &Matrix,
) -> Result<Matrix> {
    check_shape(ops, h)?;
    coeffs.validate(ops.n_nodes())?;
    let lh = ops.laplacian.spmm(h)?;
    let mut f = coeffs.alpha.apply(&lh).scale(-1.0);
    if kind != Reaction::DiffusionOnly {
        let r = reaction(kind, ops, h)?;
        f.axpy(1.0, &coeffs.beta.apply(&r))?;
    }
    Ok(f)
}

/// Result of a fixed-step integration.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// State after the last step.
    pub state: Matrix,
    /// `H(0), H(1), ..., H(n_steps)` when tracing was requested.
    pub trace: Option<Vec<Matrix>>,
}

/// One explicit step of the configured method.
pub fn step(
    kind: Reaction,
    ops: &OperatorBundle,
    coeffs: &Coefficients,
    method: Solver,
    tau: f64,
    h: &Matrix,
) -> Result<Matrix> {
    match method {
        Solver::Euler => {
            let mut next = h.clone();
            next.axpy(tau, &rhs(kind, ops, coeffs, h)?)?;
            Ok(next)
        }
        Solver::Rk4 => {
            let k1 = rhs(kind, ops, coeffs, h)?;
            let mut y = h.clone();
            y.axpy(0.5 * tau, &k1)?;
            let k2 = rhs(kind, ops, coeffs, &y)?;
            let mut y = h.clone();
            y.axpy(0.5 * tau, &k2)?;
            let k3 = rhs(kind, ops, coeffs, &y)?;
            let mut y = h.clone();
            y.axpy(tau, &k3)?;
            let k4 = rhs(kind, ops, coeffs, &y)?;
            let mut next = h.clone();
            next.axpy(tau / 6.0, &k1)?;
            next.axpy(tau / 3.0, &k2)?;
            next.axpy(tau / 3.0, &k3)?;
            next.axpy(tau / 6.0, &k4)?;
            Ok(next)
        }
    }
}

/// Integrates from `h0` over `n_steps` fixed steps of size τ.
///
/// Fails with [`GreadError::Divergence`] naming the first step whose state
/// contains NaN or an infinity.
pub fn integrate(
    kind: Reaction,
    ops: &OperatorBundle,
    coeffs: &Coefficients,
    cfg: &SolverConfig,
    h0: &Matrix,
    trace: bool,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_shape(ops, h0)?;
    if !h0.is_finite() {
        return Err(GreadError::Divergence {
            step: 0,
            context: String::new(),
        });
    }
    let n = cfg.n_steps();
    let mut states = trace.then(|| {
        let mut v = Vec::with_capacity(n + 1);
        v.push(h0.clone());
        v
    });
    let mut h = h0.clone();
    for k in 0..n {
        h = step(kind, ops, coeffs, cfg.method, cfg.tau, &h)?;
        if !h.is_finite() {
            return Err(GreadError::Divergence {
                step: k + 1,
                context: String::new(),
            });
        }
        if let Some(s) = states.as_mut() {
            s.push(h.clone());
        }
    }
    Ok(Trajectory {
        state: h,
        trace: states,
    })
}

/// `ReLU((I - L) H W)`, one discrete GCN-style layer.
pub fn gcn_step_baseline(ops: &OperatorBundle, h: &Matrix, w: &Matrix) -> Result<Matrix> {
    check_shape(ops, h)?;
    let smoothed = h.sub(&ops.laplacian.spmm(h)?)?;
    Ok(smoothed.matmul(w)?.map(|v| v.max(0.0)))
}

/// Blur `B = Ã H` followed by sharpening `B + L̃ B`.
pub fn blur_then_sharpen(ops: &OperatorBundle, h: &Matrix) -> Result<Matrix> {
    check_shape(ops, h)?;
    let blurred = ops.adjacency.spmm(h)?;
    let sharpened = ops.laplacian.spmm(&blurred)?;
    blurred.add(&sharpened)
}
