//! Soft adjacency from scaled dot-product attention over graph edges.
//!
//! Row `i` of `Ã` is a softmax over `{ j : (i, j) ∈ E } ∪ { i }` of
//! `(H_i W_K) · (H_j W_Q) / scale`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dense::{dot, Matrix};
use crate::error::{GreadError, Result};
use crate::graph::{GraphKind, SparseGraph};
use crate::par;

/// Divisor applied to attention scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionScale {
    /// `sqrt(d_k)`.
    #[default]
    SqrtDk,
    /// `d_k`.
    Dk,
}

impl FromStr for AttentionScale {
    type Err = GreadError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt_dk" | "sqrt" => Ok(AttentionScale::SqrtDk),
            "dk" => Ok(AttentionScale::Dk),
            other => Err(GreadError::config(format!("unknown attention scale '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    /// `d × d_k` key projection.
    pub w_key: Matrix,
    /// `d × d_k` query projection.
    pub w_query: Matrix,
    pub scale: AttentionScale,
}

impl AttentionParams {
    pub fn new(w_key: Matrix, w_query: Matrix, scale: AttentionScale) -> Result<Self> {
        if w_key.shape() != w_query.shape() {
            return Err(GreadError::shape(format!(
                "key projection {:?} vs query projection {:?}",
                w_key.shape(),
                w_query.shape()
            )));
        }
        Ok(AttentionParams {
            w_key,
            w_query,
            scale,
        })
    }

    pub fn d_k(&self) -> usize {
        self.w_key.cols()
    }

    pub fn divisor(&self) -> f64 {
        let dk = self.d_k() as f64;
        match self.scale {
            AttentionScale::SqrtDk => dk.sqrt(),
            AttentionScale::Dk => dk,
        }
    }
}

/// Soft adjacency together with the projections it was computed from.
#[derive(Clone, Debug)]
pub struct SoftAdjacency {
    pub adjacency: SparseGraph,
    pub keys: Matrix,
    pub queries: Matrix,
}

/// Row-wise softmax of `scores` over the CSR rows of `pattern`.
pub fn edge_softmax(pattern: &SparseGraph, scores: &[f64]) -> Result<SparseGraph> {
    if scores.len() != pattern.nnz() {
        return Err(GreadError::shape("one score per stored entry required"));
    }
    if let Some(p) = scores.iter().position(|s| !s.is_finite()) {
        return Err(GreadError::data(format!("non-finite attention score at entry {p}")));
    }
    let ptr = pattern.row_ptr();
    let rows: Vec<Vec<f64>> = par::map_indexed(pattern.n_nodes(), scores.len(), |i| {
        let s = &scores[ptr[i]..ptr[i + 1]];
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = s.iter().map(|&x| (x - max).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|x| x / z).collect()
    });
    Ok(SparseGraph::from_csr(
        pattern.n_nodes(),
        ptr.to_vec(),
        pattern.col_indices().to_vec(),
        rows.concat(),
        GraphKind::RowStochastic,
    ))
}

/// Scores `(K_i · Q_j) / scale` for every stored `(i, j)` of `pattern`.
pub fn edge_scores(pattern: &SparseGraph, keys: &Matrix, queries: &Matrix, divisor: f64) -> Vec<f64> {
    par::map_indexed(pattern.n_nodes(), pattern.nnz() * keys.cols(), |i| {
        pattern
            .neighbors(i)
            .iter()
            .map(|&j| dot(keys.row(i), queries.row(j)) / divisor)
            .collect::<Vec<_>>()
    })
    .concat()
}

/// Attention over `pattern`, which must already contain every self-loop.
pub fn soft_adjacency_on_pattern(
    p: &AttentionParams,
    pattern: &SparseGraph,
    h: &Matrix,
) -> Result<SoftAdjacency> {
    if h.rows() != pattern.n_nodes() {
        return Err(GreadError::shape(format!(
            "{} embeddings for {} nodes",
            h.rows(),
            pattern.n_nodes()
        )));
    }
    if h.cols() != p.w_key.rows() {
        return Err(GreadError::shape(format!(
            "embedding width {} vs projection input {}",
            h.cols(),
            p.w_key.rows()
        )));
    }
    let keys = h.matmul(&p.w_key)?;
    let queries = h.matmul(&p.w_query)?;
    let scores = edge_scores(pattern, &keys, &queries, p.divisor());
    let adjacency = edge_softmax(pattern, &scores)?;
    Ok(SoftAdjacency {
        adjacency,
        keys,
        queries,
    })
}

/// Row-stochastic `Ã` supported on the edges of `g` plus one self-loop per node.
pub fn soft_adjacency(p: &AttentionParams, g: &SparseGraph, h: &Matrix) -> Result<SparseGraph> {
    let pattern = g.with_self_loops();
    Ok(soft_adjacency_on_pattern(p, &pattern, h)?.adjacency)
}
