//! Synthetic graph generators and stratified splits.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dense::Matrix;
use crate::error::{GreadError, Result};
use crate::graph::{LabeledGraph, SparseGraph, Split};

pub const TRAIN_FRACTION: f64 = 0.6;
pub const VAL_FRACTION: f64 = 0.2;

/// Per-class shuffled split with 60/20/20 proportions.
///
/// Each class contributes `round(0.6·n_c)` training and `round(0.2·n_c)`
/// validation nodes; the remainder is test.
pub fn stratified_split<R: Rng + ?Sized>(labels: &[usize], n_classes: usize, rng: &mut R) -> Split {
    let mut split = Split::empty(labels.len());
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(rng);
        let n = members.len() as f64;
        let n_train = (TRAIN_FRACTION * n).round() as usize;
        let n_val = ((VAL_FRACTION * n).round() as usize).min(members.len() - n_train);
        for (k, &i) in members.iter().enumerate() {
            if k < n_train {
                split.train[i] = true;
            } else if k < n_train + n_val {
                split.val[i] = true;
            } else {
                split.test[i] = true;
            }
        }
    }
    split
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsbmConfig {
    pub n_nodes: usize,
    pub n_classes: usize,
    pub feat_dim: usize,
    /// Mean of every feature dimension, one entry per class.
    pub mu: Vec<f64>,
    pub sigma: f64,
    pub p_intra: f64,
    pub p_inter: f64,
    pub seed: u64,
}

impl Default for CsbmConfig {
    fn default() -> Self {
        CsbmConfig {
            n_nodes: 100,
            n_classes: 2,
            feat_dim: 2,
            mu: vec![-0.5, 0.5],
            sigma: 2.0,
            p_intra: 0.9,
            p_inter: 0.1,
            seed: 0,
        }
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(GreadError::config(format!("{name} must lie in [0, 1], got {p}")))
    }
}

impl CsbmConfig {
    pub fn validate(&self) -> Result<()> {
        check_probability("p_intra", self.p_intra)?;
        check_probability("p_inter", self.p_inter)?;
        if self.n_classes == 0 || self.n_nodes == 0 {
            return Err(GreadError::config("n_nodes and n_classes must be positive"));
        }
        if !self.n_nodes.is_multiple_of(self.n_classes) {
            return Err(GreadError::config(format!(
                "n_nodes {} is not divisible by n_classes {}",
                self.n_nodes, self.n_classes
            )));
        }
        if self.mu.len() != self.n_classes {
            return Err(GreadError::config(format!(
                "mu has {} entries for {} classes",
                self.mu.len(),
                self.n_classes
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(GreadError::config("sigma must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Contextual stochastic block model with Gaussian features.
///
/// Nodes are labelled in contiguous equal blocks. Every unordered pair is
/// linked independently with `p_intra` or `p_inter`.
pub fn generate_csbm(cfg: &CsbmConfig) -> Result<LabeledGraph> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_nodes;
    let block = n / cfg.n_classes;
    let labels: Vec<usize> = (0..n).map(|i| i / block).collect();

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { cfg.p_intra } else { cfg.p_inter };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let graph = SparseGraph::from_edges(n, &edges)?;

    let noise = Normal::new(0.0, cfg.sigma).map_err(|e| GreadError::config(e.to_string()))?;
    let mut features = Matrix::zeros(n, cfg.feat_dim);
    for (i, &y) in labels.iter().enumerate() {
        for v in features.row_mut(i) {
            *v = cfg.mu[y] + noise.sample(&mut rng);
        }
    }
    let split = stratified_split(&labels, cfg.n_classes, &mut rng);
    LabeledGraph::new(graph, features, labels, cfg.n_classes, split)
}

/// Where node features of a homophily-controlled graph come from.
#[derive(Clone, Debug)]
pub enum FeatureSource {
    /// Class mean drawn from `N(0, separation²)` per dimension, plus
    /// `N(0, sigma²)` noise per entry.
    Gaussian { dim: usize, separation: f64, sigma: f64 },
    /// Rows copied from random reference nodes of the same class
    /// (class index taken modulo the reference class count).
    Reference(Arc<LabeledGraph>),
}

#[derive(Clone, Debug)]
pub struct HomophilyConfig {
    pub n_nodes: usize,
    pub n_classes: usize,
    pub target_h: f64,
    pub avg_degree: f64,
    pub features: FeatureSource,
    pub seed: u64,
}

impl HomophilyConfig {
    pub fn new(n_nodes: usize, n_classes: usize, target_h: f64, seed: u64) -> HomophilyConfig {
        HomophilyConfig {
            n_nodes,
            n_classes,
            target_h,
            avg_degree: 3.98,
            features: FeatureSource::Gaussian {
                dim: 16,
                separation: 1.0,
                sigma: 1.0,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("target_h", self.target_h)?;
        if self.n_nodes < 2 || self.n_classes == 0 {
            return Err(GreadError::config("need at least 2 nodes and 1 class"));
        }
        if self.n_classes > self.n_nodes {
            return Err(GreadError::config("more classes than nodes"));
        }
        if self.n_classes == 1 && self.target_h < 1.0 {
            return Err(GreadError::config("a single class cannot produce cross-class edges"));
        }
        let max_degree = (self.n_nodes - 1) as f64;
        if !(self.avg_degree >= 0.0 && self.avg_degree <= max_degree) {
            return Err(GreadError::config(format!(
                "avg_degree {} is infeasible for {} nodes",
                self.avg_degree, self.n_nodes
            )));
        }
        if let FeatureSource::Reference(r) = &self.features {
            if r.n_nodes() == 0 || r.n_classes == 0 {
                return Err(GreadError::config("reference graph is empty"));
            }
        }
        Ok(())
    }
}

/// Picks an index with probability proportional to `weights`.
fn weighted_pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if u < w {
            return Some(k);
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0)
}

/// Class-conditional preferential attachment.
///
/// Nodes arrive in random order with balanced labels. Each arrival places
/// its share of the edge budget: for every edge it draws its own class with
/// probability `target_h` (otherwise a uniformly random other class) and
/// links to an earlier node of that class chosen with weight `degree + 1`.
/// Edges that find no eligible partner are carried over to later arrivals.
pub fn generate_homophily_graph(cfg: &HomophilyConfig) -> Result<LabeledGraph> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_nodes;
    let c = cfg.n_classes;

    let mut labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    labels.shuffle(&mut rng);

    let budget = (n as f64 * cfg.avg_degree / 2.0).round() as usize;
    let mut degree = vec![0usize; n];
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    let mut edges = Vec::with_capacity(budget);
    let mut carry = 0usize;
    let mut placed_quota = 0usize;
    for v in 0..n {
        if v > 0 {
            let due = v * budget / (n - 1);
            let mut quota = due - placed_quota + carry;
            placed_quota = due;
            let mut chosen: Vec<usize> = Vec::new();
            carry = 0;
            while quota > 0 {
                quota -= 1;
                let own = labels[v];
                let class = if c == 1 || rng.random::<f64>() < cfg.target_h {
                    own
                } else {
                    let k = rng.random_range(0..c - 1);
                    if k >= own {
                        k + 1
                    } else {
                        k
                    }
                };
                let pool = &by_class[class];
                let weights: Vec<f64> = pool
                    .iter()
                    .map(|&u| if chosen.contains(&u) { 0.0 } else { (degree[u] + 1) as f64 })
                    .collect();
                match weighted_pick(&weights, &mut rng) {
                    Some(k) => chosen.push(pool[k]),
                    None => carry += 1,
                }
            }
            for &u in &chosen {
                degree[u] += 1;
                degree[v] += 1;
                edges.push((u, v));
            }
        }
        by_class[labels[v]].push(v);
    }
    let graph = SparseGraph::from_edges(n, &edges)?;

    let features = match &cfg.features {
        FeatureSource::Gaussian { dim, separation, sigma } => {
            let means = Normal::new(0.0, *separation).map_err(|e| GreadError::config(e.to_string()))?;
            let noise = Normal::new(0.0, *sigma).map_err(|e| GreadError::config(e.to_string()))?;
            let centers = Matrix::from_fn(c, *dim, |_, _| means.sample(&mut rng));
            Matrix::from_fn(n, *dim, |i, j| centers[(labels[i], j)] + noise.sample(&mut rng))
        }
        FeatureSource::Reference(r) => {
            let pools: Vec<Vec<usize>> = (0..r.n_classes)
                .map(|k| (0..r.n_nodes()).filter(|&i| r.labels[i] == k).collect())
                .collect();
            let mut out = Matrix::zeros(n, r.n_features());
            for i in 0..n {
                let pool = &pools[labels[i] % r.n_classes];
                let src = if pool.is_empty() {
                    rng.random_range(0..r.n_nodes())
                } else {
                    pool[rng.random_range(0..pool.len())]
                };
                out.row_mut(i).copy_from_slice(r.features.row(src));
            }
            out
        }
    };
    let split = stratified_split(&labels, c, &mut rng);
    LabeledGraph::new(graph, features, labels, c, split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::homophily_ratio;

    #[test]
    fn empty_and_clique_extremes() {
        let g = generate_csbm(&CsbmConfig {
            p_intra: 0.0,
            p_inter: 0.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(g.graph.nnz(), 0);

        let g = generate_csbm(&CsbmConfig {
            p_intra: 1.0,
            p_inter: 0.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(g.graph.n_undirected_edges(), 2 * 50 * 49 / 2);
        assert_eq!(homophily_ratio(&g).unwrap(), 1.0);
    }

    #[test]
    fn csbm_is_balanced_and_split() {
        let g = generate_csbm(&CsbmConfig::default()).unwrap();
        assert_eq!(g.class_counts(), vec![50, 50]);
        let n_train = g.split.train.iter().filter(|&&m| m).count();
        let n_val = g.split.val.iter().filter(|&&m| m).count();
        assert_eq!((n_train, n_val), (60, 20));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate_csbm(&CsbmConfig {
            n_nodes: 101,
            ..Default::default()
        })
        .is_err());
        assert!(generate_csbm(&CsbmConfig {
            p_inter: 1.5,
            ..Default::default()
        })
        .is_err());
        let mut h = HomophilyConfig::new(10, 2, 0.5, 0);
        h.avg_degree = 12.0;
        assert!(generate_homophily_graph(&h).is_err());
        assert!(generate_homophily_graph(&HomophilyConfig::new(10, 1, 0.5, 0)).is_err());
    }

    #[test]
    fn reference_features_follow_class() {
        let reference = Arc::new(generate_csbm(&CsbmConfig::default()).unwrap());
        let mut cfg = HomophilyConfig::new(60, 2, 0.8, 3);
        cfg.features = FeatureSource::Reference(reference.clone());
        let g = generate_homophily_graph(&cfg).unwrap();
        assert_eq!(g.n_features(), 2);
        for i in 0..g.n_nodes() {
            let found = (0..reference.n_nodes()).any(|r| {
                reference.labels[r] == g.labels[i] && reference.features.row(r) == g.features.row(i)
            });
            assert!(found, "node {i}");
        }
    }
}
