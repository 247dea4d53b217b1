use fastdecomp::covariance::{empirical_covariance, shrunk_precision, MatrixKind, SymmetricMatrix};
use fastdecomp::dataio::concatenate;
use fastdecomp::eval::{clique_models, decomposable_log_likelihood, log_likelihood};
use fastdecomp::fastdecomp::fast_decomp;
use fastdecomp::graph::metrics;
use fastdecomp::pcdag::fit_precision_on_graph;
use fastdecomp::sparse::{graphical_lasso, GlassoOptions};
use fastdecomp::{synth, TimeSeriesDataset, UndirectedGraph};
use fastdecomp_testkit as tk;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn dataset(p: usize, n: usize, seed: u64) -> TimeSeriesDataset {
    let k = SymmetricMatrix::new(tk::random_spd(p, 0.5, seed), MatrixKind::Precision).unwrap();
    synth::sample_gaussian(&k, n, seed + 1).unwrap()
}

fn cov(m: DMatrix<f64>) -> SymmetricMatrix {
    SymmetricMatrix::new(m, MatrixKind::Covariance).unwrap()
}

fn offdiag_l1(m: &DMatrix<f64>) -> f64 {
    m.abs().sum() - m.diagonal().abs().sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn splitting_and_concatenating_restores_rows(p in 1usize..6, n in 4usize..40, cut in 2usize..38, seed in 0u64..1000) {
        let cut = cut.min(n - 2);
        let data = dataset(p, n, seed);
        let parts = [data.rows(0, cut).unwrap(), data.rows(cut, n).unwrap()];
        let joined = concatenate(&parts).unwrap();
        prop_assert_eq!(joined.samples(), data.samples());
        prop_assert_eq!(joined.labels(), data.labels());
    }

    #[test]
    fn shrunk_precision_inverts_shifted_covariance(p in 1usize..8, lambda in 0.0f64..2.0, seed in 0u64..1000) {
        let s = cov(tk::random_spd(p, 0.1, seed));
        let k = shrunk_precision(&s, lambda).unwrap();
        let back = k.values() * (s.values() + DMatrix::identity(p, p) * lambda);
        prop_assert!((back - DMatrix::identity(p, p)).amax() < 1e-9);
    }

    #[test]
    fn metrics_do_not_depend_on_node_labels(p in 1usize..12, density in 0.0f64..1.0, seed in 0u64..1000) {
        let g = UndirectedGraph::from_edges(p, tk::random_graph(p, density, seed)).unwrap();
        let mut perm: Vec<usize> = (0..p).collect();
        perm.rotate_left(seed as usize % p);
        perm.reverse();
        let h = g.relabel(&perm).unwrap();
        let (a, b) = (metrics(&g, None).unwrap(), metrics(&h, None).unwrap());
        prop_assert_eq!(a.edge_count, b.edge_count);
        prop_assert_eq!(a.max_clique_width, b.max_clique_width);
        prop_assert_eq!(a.connected, b.connected);
        prop_assert!((a.clustering_coefficient - b.clustering_coefficient).abs() < 1e-12);
        prop_assert!(a.average_shortest_path == b.average_shortest_path
            || (a.average_shortest_path - b.average_shortest_path).abs() < 1e-12);
    }

    #[test]
    fn glasso_penalty_term_shrinks_with_lambda(p in 2usize..8, seed in 0u64..1000, lo in 0.02f64..0.4, step in 0.05f64..0.5) {
        let s = cov(tk::random_spd(p, 0.2, seed));
        let opts = GlassoOptions { tol: Some(1e-16), max_iter: 5000 };
        let a = graphical_lasso(&s, lo, opts).unwrap();
        let b = graphical_lasso(&s, lo + step, opts).unwrap();
        let (la, lb) = (offdiag_l1(a.precision.values()), offdiag_l1(b.precision.values()));
        prop_assert!(lb <= la + 1e-6, "{} then {}", la, lb);
    }

    #[test]
    fn training_likelihood_grows_with_the_graph(p in 2usize..8, density in 0.1f64..0.9, drop in 0usize..100, seed in 0u64..1000) {
        let s = empirical_covariance(&dataset(p, 200, seed));
        let big = UndirectedGraph::from_edges(p, tk::random_graph(p, density, seed)).unwrap();
        let mut small = big.clone();
        for (t, (i, j)) in big.edges().into_iter().enumerate() {
            if (t + drop) % 2 == 0 {
                small.remove_edge(i, j);
            }
        }
        let fit_small = fit_precision_on_graph(&s, &small, 1e-12, 10_000).unwrap();
        let fit_big = fit_precision_on_graph(&s, &big, 1e-12, 10_000).unwrap();
        let l_small = log_likelihood(&fit_small.precision, &s).unwrap();
        let l_big = log_likelihood(&fit_big.precision, &s).unwrap();
        prop_assert!(l_big >= l_small - 1e-9, "{} < {}", l_big, l_small);
    }

    #[test]
    fn fast_decomp_likelihood_factorizes_over_cliques(p in 2usize..10, beta in 0.5f64..6.0, seed in 0u64..1000) {
        let fit = fast_decomp(&dataset(p, 150, seed), beta).unwrap();
        let model = clique_models(&fit.precision, &fit.decomposition).unwrap();
        let test = empirical_covariance(&dataset(p, 60, seed + 7));
        let full = log_likelihood(&fit.precision, &test).unwrap();
        let split = decomposable_log_likelihood(&test, &fit.decomposition, &model).unwrap();
        prop_assert!((full - split).abs() < 1e-8, "{} vs {}", full, split);
    }
}
