use serde::{Deserialize, Serialize};

use crate::dense::Matrix;
use crate::error::{GreadError, Result};

use super::sparse::{GraphKind, SparseGraph};

/// Train/validation/test membership masks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Split {
    pub fn empty(n: usize) -> Split {
        Split {
            train: vec![false; n],
            val: vec![false; n],
            test: vec![false; n],
        }
    }

    pub fn all_train(n: usize) -> Split {
        Split {
            train: vec![true; n],
            ..Split::empty(n)
        }
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.train.len() != n || self.val.len() != n || self.test.len() != n {
            return Err(GreadError::shape(format!("split masks must have length {n}")));
        }
        for i in 0..n {
            let hits = [self.train[i], self.val[i], self.test[i]]
                .iter()
                .filter(|&&b| b)
                .count();
            if hits > 1 {
                return Err(GreadError::data(format!("node {i} appears in more than one split")));
            }
        }
        Ok(())
    }

    fn select(&self, idx: &[usize]) -> Split {
        Split {
            train: idx.iter().map(|&i| self.train[i]).collect(),
            val: idx.iter().map(|&i| self.val[i]).collect(),
            test: idx.iter().map(|&i| self.test[i]).collect(),
        }
    }
}

/// Raw graph with node features, labels and split masks.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledGraph {
    pub graph: SparseGraph,
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub split: Split,
}

impl LabeledGraph {
    pub fn new(
        graph: SparseGraph,
        features: Matrix,
        labels: Vec<usize>,
        n_classes: usize,
        split: Split,
    ) -> Result<LabeledGraph> {
        let n = graph.n_nodes();
        if graph.kind() != GraphKind::Raw {
            return Err(GreadError::structure("labeled graphs hold a raw adjacency"));
        }
        if features.rows() != n || labels.len() != n {
            return Err(GreadError::shape(format!(
                "{n} nodes but {} feature rows and {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(GreadError::data(format!(
                "node {i} has label {l} outside 0..{n_classes}"
            )));
        }
        if !features.is_finite() {
            return Err(GreadError::data("non-finite feature value"));
        }
        split.validate(n)?;
        Ok(LabeledGraph {
            graph,
            features,
            labels,
            n_classes,
            split,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    /// Subgraph induced by `keep` (ascending original ids), reindexed densely.
    pub fn induced_subgraph(&self, keep: &[usize]) -> LabeledGraph {
        let mut new_id = vec![usize::MAX; self.n_nodes()];
        for (k, &v) in keep.iter().enumerate() {
            new_id[v] = k;
        }
        let mut edges = Vec::new();
        for &v in keep {
            for &u in self.graph.neighbors(v) {
                if new_id[u] != usize::MAX && v < u {
                    edges.push((new_id[v], new_id[u]));
                }
            }
        }
        let graph = SparseGraph::from_edges(keep.len(), &edges).expect("reindexed ids in range");
        LabeledGraph {
            graph,
            features: self.features.select_rows(keep),
            labels: keep.iter().map(|&v| self.labels[v]).collect(),
            n_classes: self.n_classes,
            split: self.split.select(keep),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_overlapping_masks() {
        let g = SparseGraph::from_edges(2, &[(0, 1)]).unwrap();
        let mut split = Split::all_train(2);
        split.val[1] = true;
        let err = LabeledGraph::new(g, Matrix::zeros(2, 1), vec![0, 1], 2, split).unwrap_err();
        assert!(err.to_string().contains("node 1"));
    }

    #[test]
    fn rejects_bad_labels_and_shapes() {
        let g = SparseGraph::from_edges(2, &[(0, 1)]).unwrap();
        assert!(LabeledGraph::new(
            g.clone(),
            Matrix::zeros(2, 1),
            vec![0, 2],
            2,
            Split::empty(2)
        )
        .is_err());
        assert!(
            LabeledGraph::new(g, Matrix::zeros(3, 1), vec![0, 1], 2, Split::empty(2)).is_err()
        );
    }
}
