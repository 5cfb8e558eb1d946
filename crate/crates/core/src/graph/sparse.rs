//! Compressed-sparse-row storage and the sparse products used by the dynamics.

use serde::{Deserialize, Serialize};

use crate::dense::Matrix;
use crate::error::{GreadError, Result};
use crate::par;

/// Entries with magnitude below this are dropped when squaring.
pub const STRUCTURAL_ZERO: f64 = 1e-15;

/// Tolerance used when validating symmetry and row sums.
const VALIDATION_TOL: f64 = 1e-12;

/// Which matrix a [`SparseGraph`] holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphKind {
    /// Binary, symmetric, zero-diagonal adjacency.
    Raw,
    /// `D^{-1/2} A_raw D^{-1/2}`.
    SymNormalized,
    /// `I - A` for a normalized adjacency `A`.
    Laplacian,
    /// Nonnegative rows summing to one (soft adjacency).
    RowStochastic,
    /// Any other sparse matrix, e.g. products of the above.
    General,
}

/// Square sparse matrix over the node set, in CSR layout.
///
/// Column indices are strictly increasing within each row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGraph {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    kind: GraphKind,
}

impl SparseGraph {
    /// Builds a raw adjacency from an undirected edge list.
    ///
    /// Both directions are inserted, duplicates collapse to weight 1 and
    /// self-loops are discarded.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<SparseGraph> {
        let mut pairs = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(GreadError::structure(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u != v {
                pairs.push((u, v));
                pairs.push((v, u));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let triplets: Vec<_> = pairs.into_iter().map(|(u, v)| (u, v, 1.0)).collect();
        Self::from_sorted_unique(n, &triplets, GraphKind::Raw)
    }

    /// Builds a matrix from `(row, col, value)` triplets in any order.
    ///
    /// Duplicate positions are summed. No kind-specific validation is done
    /// here; the normalisation routines check their own preconditions.
    pub fn from_triplets(
        n: usize,
        triplets: &[(usize, usize, f64)],
        kind: GraphKind,
    ) -> Result<SparseGraph> {
        let mut t = triplets.to_vec();
        for &(i, j, _) in &t {
            if i >= n || j >= n {
                return Err(GreadError::structure(format!(
                    "entry ({i}, {j}) out of range for {n} nodes"
                )));
            }
        }
        t.sort_by_key(|&(i, j, _)| (i, j));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
        for (i, j, v) in t {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        Self::from_sorted_unique(n, &merged, kind)
    }

    fn from_sorted_unique(
        n: usize,
        triplets: &[(usize, usize, f64)],
        kind: GraphKind,
    ) -> Result<SparseGraph> {
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _, _) in triplets {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseGraph {
            n,
            row_ptr,
            col_idx: triplets.iter().map(|t| t.1).collect(),
            values: triplets.iter().map(|t| t.2).collect(),
            kind,
        })
    }

    pub(crate) fn from_csr(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
        kind: GraphKind,
    ) -> SparseGraph {
        debug_assert_eq!(row_ptr.len(), n + 1);
        debug_assert_eq!(col_idx.len(), values.len());
        SparseGraph {
            n,
            row_ptr,
            col_idx,
            values,
            kind,
        }
    }

    /// Sparse copy of a dense matrix; exact zeros are not stored.
    pub fn from_dense(m: &Matrix, kind: GraphKind) -> Result<SparseGraph> {
        if m.rows() != m.cols() {
            return Err(GreadError::shape(format!(
                "sparse graph needs a square matrix, got {:?}",
                m.shape()
            )));
        }
        let mut t = Vec::new();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if m[(i, j)] != 0.0 {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_sorted_unique(m.rows(), &t, kind)
    }

    pub fn identity(n: usize) -> SparseGraph {
        SparseGraph {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
            kind: GraphKind::General,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    #[cfg(test)]
    pub(crate) fn with_kind(mut self, kind: GraphKind) -> SparseGraph {
        self.kind = kind;
        self
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(col, value)` pairs of row `i` in ascending column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Number of stored entries in row `i`.
    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = self.neighbors(i);
        match cols.binary_search(&j) {
            Ok(p) => self.values[self.row_ptr[i] + p],
            Err(_) => 0.0,
        }
    }

    /// Undirected edge count of a symmetric, zero-diagonal matrix.
    pub fn n_undirected_edges(&self) -> usize {
        let diag = (0..self.n).filter(|&i| self.get(i, i) != 0.0).count();
        (self.nnz() - diag) / 2
    }

    /// Undirected `(u, v)` pairs with `u < v`.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.nnz() / 2);
        for i in 0..self.n {
            for &j in self.neighbors(i) {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> SparseGraph {
        let mut counts = vec![0usize; self.n + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for i in 0..self.n {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let p = next[j];
                col_idx[p] = i;
                values[p] = v;
                next[j] += 1;
            }
        }
        let kind = match self.kind {
            GraphKind::RowStochastic => GraphKind::General,
            k => k,
        };
        SparseGraph {
            n: self.n,
            row_ptr,
            col_idx,
            values,
            kind,
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (self.get(j, i) - v).abs() <= tol))
    }

    /// Structural checks for a raw adjacency: symmetric, nonnegative, zero diagonal.
    pub fn validate_raw(&self) -> Result<()> {
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if v < 0.0 {
                    return Err(GreadError::structure(format!(
                        "negative weight {v} at ({i}, {j})"
                    )));
                }
                if i == j && v != 0.0 {
                    return Err(GreadError::structure(format!("self-loop at node {i}")));
                }
            }
        }
        if !self.is_symmetric(0.0) {
            return Err(GreadError::structure("adjacency is not symmetric"));
        }
        Ok(())
    }

    /// Checks that every nonzero row of a soft adjacency sums to one.
    pub fn validate_row_stochastic(&self) -> Result<()> {
        for i in 0..self.n {
            if self.degree(i) == 0 {
                continue;
            }
            let s: f64 = self.row(i).map(|(_, v)| v).sum();
            if (s - 1.0).abs() > VALIDATION_TOL || self.row(i).any(|(_, v)| v < 0.0) {
                return Err(GreadError::structure(format!(
                    "row {i} is not stochastic (sum {s})"
                )));
            }
        }
        Ok(())
    }

    /// Sparse-dense product `self · h`.
    ///
    /// Each output row sums its terms in ascending column order, so the
    /// result does not depend on how the matrix was assembled or on the
    /// execution mode.
    pub fn spmm(&self, h: &Matrix) -> Result<Matrix> {
        if h.rows() != self.n {
            return Err(GreadError::shape(format!(
                "spmm: {} nodes vs {} rows",
                self.n,
                h.rows()
            )));
        }
        let d = h.cols();
        let mut out = Matrix::zeros(self.n, d);
        par::for_each_row(out.as_mut_slice(), d, |i, out_row| {
            for (j, v) in self.row(i) {
                for (o, &x) in out_row.iter_mut().zip(h.row(j)) {
                    *o += v * x;
                }
            }
        });
        Ok(out)
    }

    /// Sparse product `self · self` (Gustavson, dense row accumulator).
    ///
    /// Entries with `|value| < 1e-15` are dropped.
    pub fn square(&self) -> SparseGraph {
        let n = self.n;
        let work = self.nnz() * (self.nnz() / n.max(1) + 1);
        let rows: Vec<Vec<(usize, f64)>> = par::map_indexed(n, work, |i| {
            let mut acc = vec![0.0f64; n];
            let mut touched = vec![false; n];
            let mut cols = Vec::new();
            for (k, a) in self.row(i) {
                for (j, b) in self.row(k) {
                    if !touched[j] {
                        touched[j] = true;
                        cols.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            cols.sort_unstable();
            cols.into_iter()
                .filter(|&j| acc[j].abs() >= STRUCTURAL_ZERO)
                .map(|j| (j, acc[j]))
                .collect()
        });
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in rows {
            for (j, v) in r {
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        SparseGraph {
            n,
            row_ptr,
            col_idx,
            values,
            kind: GraphKind::General,
        }
    }

    /// Copy with a unit self-loop added to every row that lacks one.
    ///
    /// Used as the support pattern of the soft adjacency.
    pub fn with_self_loops(&self) -> SparseGraph {
        let mut t = Vec::with_capacity(self.nnz() + self.n);
        for i in 0..self.n {
            let mut has_diag = false;
            for (j, v) in self.row(i) {
                if j == i {
                    has_diag = true;
                }
                t.push((i, j, v));
            }
            if !has_diag {
                t.push((i, i, 1.0));
            }
        }
        t.sort_by_key(|&(i, j, _)| (i, j));
        SparseGraph::from_sorted_unique(self.n, &t, GraphKind::General)
            .expect("indices already validated")
    }
}

/// `A = D^{-1/2} A_raw D^{-1/2}`; rows of isolated nodes stay zero.
pub fn symmetric_normalize(g: &SparseGraph) -> Result<SparseGraph> {
    if g.kind != GraphKind::Raw {
        return Err(GreadError::structure(format!(
            "symmetric_normalize expects a raw adjacency, got {:?}",
            g.kind
        )));
    }
    g.validate_raw()?;
    let deg: Vec<f64> = (0..g.n)
        .map(|i| g.row(i).map(|(_, v)| v).sum::<f64>())
        .collect();
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut values = Vec::with_capacity(g.nnz());
    for i in 0..g.n {
        for (j, v) in g.row(i) {
            values.push(v * inv_sqrt[i] * inv_sqrt[j]);
        }
    }
    Ok(SparseGraph {
        n: g.n,
        row_ptr: g.row_ptr.clone(),
        col_idx: g.col_idx.clone(),
        values,
        kind: GraphKind::SymNormalized,
    })
}

/// `L = I - A` with an explicit diagonal entry in every row.
pub fn laplacian(a: &SparseGraph) -> Result<SparseGraph> {
    match a.kind {
        GraphKind::SymNormalized | GraphKind::RowStochastic => {}
        k => {
            return Err(GreadError::structure(format!(
                "laplacian expects a normalized adjacency, got {k:?}"
            )))
        }
    }
    let mut row_ptr = Vec::with_capacity(a.n + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::with_capacity(a.nnz() + a.n);
    let mut values = Vec::with_capacity(a.nnz() + a.n);
    for i in 0..a.n {
        let mut diag_done = false;
        for (j, v) in a.row(i) {
            if !diag_done && j >= i {
                if j == i {
                    col_idx.push(i);
                    values.push(1.0 - v);
                    diag_done = true;
                    continue;
                }
                col_idx.push(i);
                values.push(1.0);
                diag_done = true;
            }
            col_idx.push(j);
            values.push(-v);
        }
        if !diag_done {
            col_idx.push(i);
            values.push(1.0);
        }
        row_ptr.push(col_idx.len());
    }
    Ok(SparseGraph {
        n: a.n,
        row_ptr,
        col_idx,
        values,
        kind: GraphKind::Laplacian,
    })
}
