use gread::attention::{edge_softmax, soft_adjacency, AttentionParams, AttentionScale};
use gread::dynamics::{blur_then_sharpen, reaction, rhs, step, Coefficients, OperatorBundle, Reaction, Solver};
use gread::graph::{homophily_ratio, laplacian, symmetric_normalize, LabeledGraph, SparseGraph, Split};
use gread::Matrix;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn graph_strategy(max_n: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1..=max_n).prop_flat_map(|n| {
        let edges = prop::collection::vec((0..n, 0..n), 0..(3 * n));
        (Just(n), edges)
    })
}

fn dense_square(m: &Matrix) -> Matrix {
    let n = m.rows();
    Matrix::from_fn(n, n, |i, j| (0..n).map(|k| m[(i, k)] * m[(k, j)]).sum())
}

fn features(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::uniform(n, d, 1.0, &mut rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjacency_plus_laplacian_is_identity((n, edges) in graph_strategy(40)) {
        let g = SparseGraph::from_edges(n, &edges).unwrap();
        let a = symmetric_normalize(&g).unwrap();
        let l = laplacian(&a).unwrap();
        let sum = a.to_dense().add(&l.to_dense()).unwrap();
        prop_assert!(sum.max_abs_diff(&Matrix::identity(n)).unwrap() < 1e-12);
    }

    #[test]
    fn laplacian_spectrum_in_zero_two((n, edges) in graph_strategy(50)) {
        let g = SparseGraph::from_edges(n, &edges).unwrap();
        let l = laplacian(&symmetric_normalize(&g).unwrap()).unwrap().to_dense();
        let dm = DMatrix::from_row_slice(n, n, l.as_slice());
        for ev in dm.symmetric_eigen().eigenvalues.iter() {
            prop_assert!(*ev > -1e-10 && *ev < 2.0 + 1e-10, "eigenvalue {}", ev);
        }
    }

    #[test]
    fn sparse_square_matches_dense((n, edges) in graph_strategy(50)) {
        let g = SparseGraph::from_edges(n, &edges).unwrap();
        let a = symmetric_normalize(&g).unwrap();
        let sq = a.square().to_dense();
        prop_assert!(sq.max_abs_diff(&dense_square(&a.to_dense())).unwrap() < 1e-12);
    }

    #[test]
    fn spmm_ignores_edge_order((n, edges) in graph_strategy(40), seed in any::<u64>()) {
        let mut shuffled = edges.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let flipped: Vec<_> = shuffled.iter().map(|&(a, b)| (b, a)).collect();
        let h = features(n, 3, seed);
        let a1 = symmetric_normalize(&SparseGraph::from_edges(n, &edges).unwrap()).unwrap();
        let a2 = symmetric_normalize(&SparseGraph::from_edges(n, &flipped).unwrap()).unwrap();
        let r1 = a1.spmm(&h).unwrap();
        let r2 = a2.spmm(&h).unwrap();
        prop_assert_eq!(r1.as_slice(), r2.as_slice());
    }

    #[test]
    fn homophily_survives_relabelling((n, edges) in graph_strategy(30), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % 3).collect();
        let g = SparseGraph::from_edges(n, &edges).unwrap();
        let x = Matrix::zeros(n, 1);
        let base = LabeledGraph::new(g, x.clone(), labels.clone(), 3, Split::empty(n)).unwrap();
        let Ok(h) = homophily_ratio(&base) else { return Ok(()) };

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let class_perm = [2usize, 0, 1];
        let moved: Vec<_> = edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let mut moved_labels = vec![0; n];
        for i in 0..n {
            moved_labels[perm[i]] = class_perm[labels[i]];
        }
        let g2 = SparseGraph::from_edges(n, &moved).unwrap();
        let other = LabeledGraph::new(g2, x, moved_labels, 3, Split::empty(n)).unwrap();
        let h2 = homophily_ratio(&other).unwrap();
        prop_assert!((h - h2).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant((n, edges) in graph_strategy(30), shift in -50.0f64..50.0, seed in any::<u64>()) {
        let pattern = SparseGraph::from_edges(n, &edges).unwrap().with_self_loops();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = (0..pattern.nnz()).map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect();
        let ptr = pattern.row_ptr();
        let mut shifted = scores.clone();
        for i in 0..n {
            let c = shift * (i as f64 + 1.0).sin();
            for s in &mut shifted[ptr[i]..ptr[i + 1]] {
                *s += c;
            }
        }
        let a = edge_softmax(&pattern, &scores).unwrap();
        let b = edge_softmax(&pattern, &shifted).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        for i in 0..n {
            let s: f64 = a.row(i).map(|(_, v)| v).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn blurring_sharpening_forms_agree((n, edges) in graph_strategy(50), seed in any::<u64>()) {
        let g = SparseGraph::from_edges(n, &edges).unwrap();
        let h = features(n, 4, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let attn = AttentionParams::new(
            Matrix::glorot(4, 3, &mut rng),
            Matrix::glorot(4, 3, &mut rng),
            AttentionScale::SqrtDk,
        ).unwrap();
        let soft = soft_adjacency(&attn, &g, &h).unwrap();
        let ops = OperatorBundle::new(soft, true).unwrap();
        let ops = ops.with_h0(h.clone());

        let bts = blur_then_sharpen(&ops, &h).unwrap();
        let l = ops.laplacian.to_dense();
        let eye = Matrix::identity(n);
        let factored = eye.add(&l).unwrap().matmul(&eye.sub(&l).unwrap()).unwrap().matmul(&h).unwrap();
        let mut expanded = h.sub(&ops.laplacian.spmm(&h).unwrap()).unwrap();
        expanded.axpy(1.0, &reaction(Reaction::BlurringSharpening, &ops, &h).unwrap()).unwrap();
        let a = ops.adjacency.to_dense();
        let dense_r = a.sub(&dense_square(&a)).unwrap().matmul(&h).unwrap();
        prop_assert!(bts.max_abs_diff(&factored).unwrap() < 1e-10);
        prop_assert!(bts.max_abs_diff(&expanded).unwrap() < 1e-10);
        prop_assert!(reaction(Reaction::BlurringSharpening, &ops, &h).unwrap().max_abs_diff(&dense_r).unwrap() < 1e-10);

        let euler = step(Reaction::BlurringSharpening, &ops, &Coefficients::scalar(1.0, 1.0), Solver::Euler, 1.0, &h).unwrap();
        prop_assert!(euler.max_abs_diff(&bts).unwrap() < 1e-12);
    }

    #[test]
    fn zero_coefficients_freeze_every_reaction((n, edges) in graph_strategy(20), seed in any::<u64>()) {
        let g = SparseGraph::from_edges(n, &edges).unwrap();
        let ops = OperatorBundle::new(symmetric_normalize(&g).unwrap(), true).unwrap();
        let h = features(n, 2, seed);
        let ops = ops.with_h0(h.clone());
        for kind in Reaction::REACTIONS {
            let f = rhs(kind, &ops, &Coefficients::scalar(0.0, 0.0), &h).unwrap();
            prop_assert!(f.as_slice().iter().all(|&v| v == 0.0));
        }
    }
}
