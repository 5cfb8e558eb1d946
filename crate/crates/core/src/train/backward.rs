use crate::dense::Matrix;
use crate::error::{GreadError, Result};
use crate::model::{AdjacencyMode, ForwardCache, ModelConfig, ModelParams};

use super::adjoint::{attention_vjp, integrate_vjp, LayerGrads};

/// Gradient of the loss with respect to every parameter, laid out like
/// [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle(ModelParams);

impl GradientBundle {
    pub fn new(grads: ModelParams) -> GradientBundle {
        GradientBundle(grads)
    }

    pub fn params(&self) -> &ModelParams {
        &self.0
    }

    pub fn into_params(self) -> ModelParams {
        self.0
    }

    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        self.0.tensors()
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

fn masked(m: &Matrix, mask: Option<&[f64]>) -> Matrix {
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

fn relu_gate(grad: &Matrix, pre: &Matrix) -> Result<Matrix> {
    grad.zip_map(pre, |g, z| if z > 0.0 { g } else { 0.0 })
}

/// Reverse pass for a cached training forward pass.
///
/// `dlogits` is the gradient of the loss with respect to the logits.
pub fn backward(
    cfg: &ModelConfig,
    params: &ModelParams,
    cache: &ForwardCache,
    dlogits: &Matrix,
) -> Result<GradientBundle> {
    let trace = cache
        .trace
        .as_deref()
        .ok_or(GreadError::MissingOperator("state trace"))?;
    let mut g = params.zeros_like();

    g.out_w = cache.out_in.t_matmul(dlogits)?;
    g.out_b = dlogits.column_sums();
    let d_state = masked(&dlogits.matmul_t(&params.out_w)?, cache.output_mask.as_deref());

    let ops = &cache.ops;
    let soft = cfg.adjacency == AdjacencyMode::Soft;
    let mut layer = LayerGrads::new(ops, &params.coeffs, d_state.cols(), soft);
    let mut dh0 = integrate_vjp(cfg.reaction, ops, &params.coeffs, &cfg.solver, trace, &d_state, &mut layer)?;
    dh0.axpy(1.0, &layer.h0)?;

    if let (Some(attn), Some((keys, queries)), Some(d_adj)) =
        (&params.attn, &cache.attention, layer.adjacency.as_deref())
    {
        let ag = attention_vjp(attn, &ops.adjacency, keys, queries, cache.h0(), d_adj)?;
        dh0.axpy(1.0, &ag.h0)?;
        let ga = g.attn.as_mut().expect("zeros_like keeps attention");
        ga.w_key = ag.w_key;
        ga.w_query = ag.w_query;
    }

    g.coeffs.alpha.values_mut().copy_from_slice(&layer.alpha);
    g.coeffs.beta.values_mut().copy_from_slice(&layer.beta);

    let dz2 = relu_gate(&dh0, &cache.z2)?;
    g.enc_w2 = cache.h1.t_matmul(&dz2)?;
    g.enc_b2 = dz2.column_sums();
    let dz1 = relu_gate(&dz2.matmul_t(&params.enc_w2)?, &cache.z1)?;
    g.enc_w1 = cache.x_in.t_matmul(&dz1)?;
    g.enc_b1 = dz1.column_sums();

    for (name, t) in g.tensors() {
        if t.iter().any(|v| !v.is_finite()) {
            return Err(GreadError::NonFiniteGradient(name));
        }
    }
    Ok(GradientBundle(g))
}
