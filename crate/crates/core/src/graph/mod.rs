//! Graph storage, normalisation and graph-level statistics.

mod labeled;
mod sparse;

pub use labeled::{LabeledGraph, Split};
pub use sparse::{laplacian, symmetric_normalize, GraphKind, SparseGraph, STRUCTURAL_ZERO};

use std::collections::VecDeque;

use crate::error::{GreadError, Result};

/// Node-averaged fraction of neighbours sharing the node's label.
///
/// Nodes without neighbours are left out of the average.
pub fn homophily_ratio(d: &LabeledGraph) -> Result<f64> {
    let g = &d.graph;
    let mut total = 0.0;
    let mut counted = 0usize;
    for v in 0..g.n_nodes() {
        let nbrs = g.neighbors(v);
        if nbrs.is_empty() {
            continue;
        }
        let same = nbrs.iter().filter(|&&u| d.labels[u] == d.labels[v]).count();
        total += same as f64 / nbrs.len() as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(GreadError::data("homophily ratio of a graph without edges"));
    }
    Ok(total / counted as f64)
}

/// 4-neighbour lattice; node `(x, y)` has index `y * width + x`.
pub fn grid_graph(width: usize, height: usize) -> Result<SparseGraph> {
    if width == 0 || height == 0 {
        return Err(GreadError::config(format!(
            "grid dimensions must be positive, got {width}x{height}"
        )));
    }
    let mut edges = Vec::with_capacity(2 * width * height);
    for y in 0..height {
        for x in 0..width {
            let v = y * width + x;
            if x + 1 < width {
                edges.push((v, v + 1));
            }
            if y + 1 < height {
                edges.push((v, v + width));
            }
        }
    }
    SparseGraph::from_edges(width * height, &edges)
}

/// Component id per node, numbered in order of each component's smallest node.
pub fn connected_components(g: &SparseGraph) -> Vec<usize> {
    let n = g.n_nodes();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            for &u in g.neighbors(v) {
                if comp[u] == usize::MAX {
                    comp[u] = next;
                    queue.push_back(u);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Induced subgraph on the largest connected component.
///
/// Ties go to the component holding the smallest original node index.
/// Surviving nodes keep their relative order.
pub fn largest_connected_component(d: &LabeledGraph) -> LabeledGraph {
    let comp = connected_components(&d.graph);
    let n_comp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_comp];
    for &c in &comp {
        sizes[c] += 1;
    }
    // Components are numbered by their smallest node, so the first maximum wins ties.
    let mut best = 0;
    for (c, &s) in sizes.iter().enumerate() {
        if s > sizes[best] {
            best = c;
        }
    }
    let keep: Vec<usize> = (0..comp.len()).filter(|&v| comp[v] == best).collect();
    d.induced_subgraph(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::Matrix;

    fn labeled(n: usize, edges: &[(usize, usize)], labels: Vec<usize>) -> LabeledGraph {
        let g = SparseGraph::from_edges(n, edges).unwrap();
        let features = Matrix::from_fn(n, 1, |i, _| i as f64);
        let n_classes = labels.iter().max().unwrap() + 1;
        LabeledGraph::new(g, features, labels, n_classes, Split::all_train(n)).unwrap()
    }

    #[test]
    fn homophily_fixtures() {
        let same = labeled(3, &[(0, 1), (1, 2)], vec![0, 0, 0]);
        assert_eq!(homophily_ratio(&same).unwrap(), 1.0);
        let k2 = labeled(2, &[(0, 1)], vec![0, 1]);
        assert_eq!(homophily_ratio(&k2).unwrap(), 0.0);
        // Star centre 0 with leaves 1 (same) and 2 (other): node fractions 0.5, 1, 0.
        let star = labeled(3, &[(0, 1), (0, 2)], vec![0, 0, 1]);
        assert_eq!(homophily_ratio(&star).unwrap(), 0.5);
        let empty = labeled(2, &[], vec![0, 1]);
        assert!(homophily_ratio(&empty).is_err());
    }

    #[test]
    fn homophily_skips_isolated_nodes() {
        let d = labeled(3, &[(0, 1)], vec![0, 0, 1]);
        assert_eq!(homophily_ratio(&d).unwrap(), 1.0);
    }

    #[test]
    fn grid_edge_counts() {
        assert_eq!(grid_graph(1, 1).unwrap().n_undirected_edges(), 0);
        assert_eq!(grid_graph(2, 2).unwrap().n_undirected_edges(), 4);
        assert_eq!(grid_graph(3, 3).unwrap().n_undirected_edges(), 12);
        assert_eq!(grid_graph(20, 20).unwrap().n_undirected_edges(), 760);
        assert!(grid_graph(0, 4).is_err());
    }

    #[test]
    fn lcc_connected_is_identity() {
        let d = labeled(4, &[(0, 1), (1, 2), (2, 3)], vec![0, 1, 0, 1]);
        assert_eq!(largest_connected_component(&d), d);
    }

    #[test]
    fn lcc_picks_larger_component() {
        let mut edges = vec![(0, 1), (1, 2), (2, 3), (3, 4)];
        edges.extend([(5, 6), (6, 7)]);
        let d = labeled(8, &edges, vec![0, 1, 0, 1, 0, 1, 1, 1]);
        let l = largest_connected_component(&d);
        assert_eq!(l.n_nodes(), 5);
        assert_eq!(l.labels, vec![0, 1, 0, 1, 0]);
        assert_eq!(l.features[(4, 0)], 4.0);
    }

    #[test]
    fn lcc_tie_keeps_smallest_index() {
        // Components {1, 4} and {0, 3}; node 2 isolated. {0, 3} holds index 0.
        let d = labeled(5, &[(1, 4), (0, 3)], vec![0, 1, 0, 1, 0]);
        let l = largest_connected_component(&d);
        assert_eq!(l.n_nodes(), 2);
        assert_eq!(l.features.as_slice(), &[0.0, 3.0]);
        assert_eq!(l.graph.get(0, 1), 1.0);
    }
}
