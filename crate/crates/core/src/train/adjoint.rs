//! Reverse-mode sweeps through the reaction-diffusion layer.
//!
//! Gradients are those of the discrete integrator actually run in the
//! forward pass, so they match finite differences of the computed loss.

use crate::attention::AttentionParams;
use crate::dense::{dot, Matrix};
use crate::dynamics::{reaction, rhs, CoefMode, Coefficients, OperatorBundle, Reaction, Solver, SolverConfig};
use crate::error::{GreadError, Result};
use crate::graph::{GraphKind, SparseGraph};
use crate::par;

/// Parameter cotangents accumulated while walking the trajectory backwards.
#[derive(Clone, Debug)]
pub struct LayerGrads {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Aligned with the stored entries of the adjacency; `None` when the
    /// adjacency is fixed.
    pub adjacency: Option<Vec<f64>>,
    /// Direct dependence on `H(0)` through the source term.
    pub h0: Matrix,
}

impl LayerGrads {
    pub fn new(ops: &OperatorBundle, coeffs: &Coefficients, channels: usize, track_adjacency: bool) -> LayerGrads {
        LayerGrads {
            alpha: vec![0.0; coeffs.alpha.values().len()],
            beta: vec![0.0; coeffs.beta.values().len()],
            adjacency: track_adjacency.then(|| vec![0.0; ops.adjacency.nnz()]),
            h0: Matrix::zeros(ops.n_nodes(), channels),
        }
    }
}

fn accumulate_coef(mode: CoefMode, acc: &mut [f64], term: &Matrix, cot: &Matrix, sign: f64) {
    let dots = term.row_dots(cot).expect("matching shapes");
    match mode {
        CoefMode::Scalar => acc[0] += sign * dots.iter().sum::<f64>(),
        CoefMode::PerNode => {
            for (a, d) in acc.iter_mut().zip(dots) {
                *a += sign * d;
            }
        }
    }
}

/// `acc[e] += s * <left_i, right_j>` for every stored entry `e = (i, j)`.
fn accumulate_outer(pattern: &SparseGraph, left: &Matrix, right: &Matrix, s: f64, acc: &mut [f64]) {
    let ptr = pattern.row_ptr();
    let cols = pattern.col_indices();
    let rows = par::map_indexed(pattern.n_nodes(), pattern.nnz() * left.cols(), |i| {
        cols[ptr[i]..ptr[i + 1]]
            .iter()
            .map(|&j| dot(left.row(i), right.row(j)))
            .collect::<Vec<f64>>()
    });
    for (a, v) in acc.iter_mut().zip(rows.into_iter().flatten()) {
        *a += s * v;
    }
}

/// Pulls the cotangent `cot` of `f(Y)` back to `Y`, accumulating parameter
/// cotangents into `grads`.
pub fn rhs_vjp(
    kind: Reaction,
    ops: &OperatorBundle,
    coeffs: &Coefficients,
    y: &Matrix,
    cot: &Matrix,
    grads: &mut LayerGrads,
) -> Result<Matrix> {
    let at = &ops.adjacency_t;

    let lh = ops.laplacian.spmm(y)?;
    accumulate_coef(coeffs.alpha.mode(), &mut grads.alpha, &lh, cot, -1.0);
    let ga = coeffs.alpha.apply(cot);
    let mut dy = at.spmm(&ga)?.sub(&ga)?;
    if let Some(acc) = grads.adjacency.as_mut() {
        accumulate_outer(&ops.adjacency, &ga, y, 1.0, acc);
    }

    if kind == Reaction::DiffusionOnly {
        return Ok(dy);
    }
    let r = reaction(kind, ops, y)?;
    accumulate_coef(coeffs.beta.mode(), &mut grads.beta, &r, cot, 1.0);
    let gb = coeffs.beta.apply(cot);
    match kind {
        Reaction::Fisher => dy.axpy(1.0, &gb.zip_map(y, |g, x| g * (1.0 - 2.0 * x))?)?,
        Reaction::AllenCahn => dy.axpy(1.0, &gb.zip_map(y, |g, x| g * (1.0 - 3.0 * x * x))?)?,
        Reaction::Zeldovich => dy.axpy(1.0, &gb.zip_map(y, |g, x| g * (2.0 * x - 3.0 * x * x))?)?,
        Reaction::BlurringSharpening => {
            let u = at.spmm(&gb)?;
            dy.axpy(1.0, &u)?;
            dy.axpy(-1.0, &at.spmm(&u)?)?;
            if let Some(acc) = grads.adjacency.as_mut() {
                let blurred = ops.adjacency.spmm(y)?;
                accumulate_outer(&ops.adjacency, &gb, y, 1.0, acc);
                accumulate_outer(&ops.adjacency, &gb, &blurred, -1.0, acc);
                accumulate_outer(&ops.adjacency, &u, y, -1.0, acc);
            }
        }
        Reaction::Source => grads.h0.axpy(1.0, &gb)?,
        Reaction::FilterBank | Reaction::FilterBankStar => {
            let identity_weight = if kind == Reaction::FilterBank { 1.0 } else { 2.0 };
            dy.axpy(identity_weight, &gb)?;
            dy.axpy(-1.0, &at.spmm(&gb)?)?;
            if let Some(acc) = grads.adjacency.as_mut() {
                accumulate_outer(&ops.adjacency, &gb, y, -1.0, acc);
            }
        }
        Reaction::DiffusionOnly => {}
        Reaction::GcnStep => return Err(GreadError::config("the GCN-step baseline has no adjoint")),
    }
    Ok(dy)
}

fn shifted(h: &Matrix, s: f64, k: &Matrix) -> Result<Matrix> {
    let mut y = h.clone();
    y.axpy(s, k)?;
    Ok(y)
}

/// Pulls the cotangent of the final state back to `H(0)` through the stored
/// trajectory `H(0), ..., H(n)`.
pub fn integrate_vjp(
    kind: Reaction,
    ops: &OperatorBundle,
    coeffs: &Coefficients,
    cfg: &SolverConfig,
    trace: &[Matrix],
    cot_final: &Matrix,
    grads: &mut LayerGrads,
) -> Result<Matrix> {
    let n = cfg.n_steps();
    if trace.len() != n + 1 {
        return Err(GreadError::shape(format!(
            "trace holds {} states, expected {}",
            trace.len(),
            n + 1
        )));
    }
    let tau = cfg.tau;
    let mut g = cot_final.clone();
    for h in trace[..n].iter().rev() {
        g = match cfg.method {
            Solver::Euler => {
                let dy = rhs_vjp(kind, ops, coeffs, h, &g.scale(tau), grads)?;
                g.add(&dy)?
            }
            Solver::Rk4 => {
                let k1 = rhs(kind, ops, coeffs, h)?;
                let y2 = shifted(h, 0.5 * tau, &k1)?;
                let k2 = rhs(kind, ops, coeffs, &y2)?;
                let y3 = shifted(h, 0.5 * tau, &k2)?;
                let k3 = rhs(kind, ops, coeffs, &y3)?;
                let y4 = shifted(h, tau, &k3)?;

                let mut dh = g.clone();
                let g4 = rhs_vjp(kind, ops, coeffs, &y4, &g.scale(tau / 6.0), grads)?;
                dh.axpy(1.0, &g4)?;
                let dk3 = shifted(&g.scale(tau / 3.0), tau, &g4)?;
                let g3 = rhs_vjp(kind, ops, coeffs, &y3, &dk3, grads)?;
                dh.axpy(1.0, &g3)?;
                let dk2 = shifted(&g.scale(tau / 3.0), 0.5 * tau, &g3)?;
                let g2 = rhs_vjp(kind, ops, coeffs, &y2, &dk2, grads)?;
                dh.axpy(1.0, &g2)?;
                let dk1 = shifted(&g.scale(tau / 6.0), 0.5 * tau, &g2)?;
                let g1 = rhs_vjp(kind, ops, coeffs, h, &dk1, grads)?;
                dh.axpy(1.0, &g1)?;
                dh
            }
        };
    }
    Ok(g)
}

/// Cotangents of the attention projections and of their input.
#[derive(Clone, Debug)]
pub struct AttentionGrads {
    pub w_key: Matrix,
    pub w_query: Matrix,
    pub h0: Matrix,
}

/// Backpropagates a cotangent on the soft adjacency entries through the
/// edge softmax and the key/query projections.
pub fn attention_vjp(
    params: &AttentionParams,
    soft: &SparseGraph,
    keys: &Matrix,
    queries: &Matrix,
    h0: &Matrix,
    d_adjacency: &[f64],
) -> Result<AttentionGrads> {
    if d_adjacency.len() != soft.nnz() {
        return Err(GreadError::shape("adjacency cotangent length differs from nnz"));
    }
    let ptr = soft.row_ptr();
    let a = soft.values();
    let divisor = params.divisor();
    let mut ds = vec![0.0; soft.nnz()];
    for i in 0..soft.n_nodes() {
        let range = ptr[i]..ptr[i + 1];
        let inner: f64 = range.clone().map(|e| a[e] * d_adjacency[e]).sum();
        for e in range {
            ds[e] = a[e] * (d_adjacency[e] - inner) / divisor;
        }
    }
    let ds = SparseGraph::from_csr(
        soft.n_nodes(),
        ptr.to_vec(),
        soft.col_indices().to_vec(),
        ds,
        GraphKind::General,
    );
    let d_keys = ds.spmm(queries)?;
    let d_queries = ds.transpose().spmm(keys)?;
    let w_key = h0.t_matmul(&d_keys)?;
    let w_query = h0.t_matmul(&d_queries)?;
    let dh = d_keys.matmul_t(&params.w_key)?.add(&d_queries.matmul_t(&params.w_query)?)?;
    Ok(AttentionGrads {
        w_key,
        w_query,
        h0: dh,
    })
}
