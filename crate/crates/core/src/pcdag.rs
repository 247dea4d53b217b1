//! PC-style structure learning and precision estimation on a fixed graph.
//!
//! [`pc_skeleton`] prunes a complete graph with Gaussian conditional
//! independence tests of growing order. Removals within a stage are decided
//! against the adjacency at the start of that stage, so the result does not
//! depend on the order edges are visited in. [`orient_and_moralize`] turns the
//! skeleton into the undirected graph with the same conditional
//! independences as the partially oriented DAG, and
//! [`fit_precision_on_graph`] fits a Gaussian with that support.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::covariance::{empirical_covariance, to_correlation, MatrixKind, SymmetricMatrix};
use crate::dataio::TimeSeriesDataset;
use crate::fastdecomp::fisher_z;
use crate::graph::{maximal_cliques, UndirectedGraph};
use crate::linalg;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcResult {
    pub skeleton: UndirectedGraph,
    /// Conditioning set that separated each removed pair, keyed by `(i, j)`
    /// with `i < j`.
    pub sepsets: BTreeMap<(usize, usize), Vec<usize>>,
    pub moral_graph: UndirectedGraph,
    /// Largest conditioning-set size for which a test was run.
    pub max_degree_reached: usize,
}

impl PcResult {
    pub fn sepset(&self, i: usize, j: usize) -> Option<&[usize]> {
        self.sepsets.get(&(i.min(j), i.max(j))).map(Vec::as_slice)
    }
}

/// Partial correlation of `i` and `j` given `cond`, read off the inverse of
/// the correlation matrix restricted to `[i, j, cond...]`.
fn partial_correlation(corr: &DMatrix<f64>, i: usize, j: usize, cond: &[usize]) -> Result<f64> {
    if cond.is_empty() {
        return Ok(corr[(i, j)]);
    }
    let mut idx = vec![i, j];
    idx.extend_from_slice(cond);
    let k = linalg::spd_inverse(&linalg::principal(corr, &idx), "")
        .map_err(|_| Error::Singular(format!("correlation restricted to {idx:?}")))?;
    Ok(-k[(0, 1)] / (k[(0, 0)] * k[(1, 1)]).sqrt())
}

/// Calls `f` on each `size`-subset of `items` in lexicographic order until it
/// returns `Some`.
fn first_subset<T>(items: &[usize], size: usize, mut f: impl FnMut(&[usize]) -> Result<Option<T>>) -> Result<Option<T>> {
    let m = items.len();
    if size > m {
        return Ok(None);
    }
    let mut pos: Vec<usize> = (0..size).collect();
    let mut subset = vec![0; size];
    loop {
        for (s, &q) in subset.iter_mut().zip(&pos) {
            *s = items[q];
        }
        if let Some(hit) = f(&subset)? {
            return Ok(Some(hit));
        }
        let Some(r) = (0..size).rev().find(|&r| pos[r] != r + m - size) else {
            return Ok(None);
        };
        pos[r] += 1;
        for t in r + 1..size {
            pos[t] = pos[t - 1] + 1;
        }
    }
}

/// Learns the skeleton with conditioning sets of size `0..=max_condition_size`
/// and significance level `alpha`, then moralizes it.
///
/// An edge `(i, j)` is dropped at the first conditioning set `S`, drawn from
/// the stage-start neighbors of `i` and then of `j`, for which
/// `√(n − |S| − 3) · |z(ρ_ij·S)| ≤ Φ⁻¹(1 − α/2)`.
pub fn pc_skeleton(data: &TimeSeriesDataset, alpha: f64, max_condition_size: usize) -> Result<PcResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let (n, p) = (data.n(), data.p());
    let deepest = max_condition_size.min(p.saturating_sub(2));
    if n < deepest + 4 {
        return Err(Error::InsufficientSamples(format!(
            "conditioning sets of size {deepest} need n >= {}, got n = {n}",
            deepest + 4
        )));
    }
    let corr = to_correlation(&empirical_covariance(data))?;
    let corr = corr.values();
    let critical = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - alpha / 2.0);

    let mut g = UndirectedGraph::complete(p);
    let mut sepsets = BTreeMap::new();
    let mut max_degree_reached = 0;
    for level in 0..=max_condition_size {
        let snapshot = g.clone();
        let edges = snapshot.edges();
        if !edges
            .iter()
            .any(|&(i, j)| snapshot.degree(i) > level || snapshot.degree(j) > level)
        {
            break;
        }
        max_degree_reached = level;
        let scale = ((n - level - 3) as f64).sqrt();
        let independent = |i: usize, j: usize, cond: &[usize]| -> Result<Option<Vec<usize>>> {
            let rho = partial_correlation(corr, i, j, cond)?;
            let accept = match fisher_z(rho) {
                Ok(z) => scale * z.abs() <= critical,
                Err(_) => false,
            };
            Ok(accept.then(|| cond.to_vec()))
        };
        let decisions: Vec<Option<Vec<usize>>> = edges
            .par_iter()
            .map(|&(i, j)| {
                for (a, b) in [(i, j), (j, i)] {
                    let others: Vec<usize> = snapshot.neighbors(a).filter(|&v| v != b).collect();
                    if let Some(s) = first_subset(&others, level, |s| independent(i, j, s))? {
                        return Ok(Some(s));
                    }
                }
                Ok(None)
            })
            .collect::<Result<_>>()?;
        for (&(i, j), decision) in edges.iter().zip(decisions) {
            if let Some(s) = decision {
                g.remove_edge(i, j);
                sepsets.insert((i, j), s);
            }
        }
    }
    let mut result = PcResult {
        moral_graph: UndirectedGraph::empty(p),
        skeleton: g.with_labels(data.labels().to_vec())?,
        sepsets,
        max_degree_reached,
    };
    result.moral_graph = orient_and_moralize(&result);
    Ok(result)
}

/// Orients every unshielded triple `i − k − j` with `k` outside the
/// separating set of `(i, j)` as a collider `i → k ← j`, then marries the
/// parents of every node. Edges oriented both ways count as undirected and
/// contribute no parents.
pub fn orient_and_moralize(result: &PcResult) -> UndirectedGraph {
    let g = &result.skeleton;
    let p = g.p();
    let mut arrows: BTreeSet<(usize, usize)> = BTreeSet::new();
    for i in 0..p {
        for j in i + 1..p {
            if g.has_edge(i, j) {
                continue;
            }
            let sep = result.sepset(i, j).unwrap_or(&[]);
            for k in g.neighbor_set(i).intersection(g.neighbor_set(j)) {
                if !sep.contains(k) {
                    arrows.insert((i, *k));
                    arrows.insert((j, *k));
                }
            }
        }
    }
    let mut moral = g.clone();
    for k in 0..p {
        let parents: Vec<usize> = g
            .neighbors(k)
            .filter(|&a| arrows.contains(&(a, k)) && !arrows.contains(&(k, a)))
            .collect();
        for (x, &a) in parents.iter().enumerate() {
            for &b in &parents[x + 1..] {
                moral.add_edge(a, b).expect("nodes in range");
            }
        }
    }
    moral
}

#[derive(Debug, Clone)]
pub struct GraphFit {
    pub precision: SymmetricMatrix,
    pub converged: bool,
    pub iterations: usize,
    /// Largest `|(K⁻¹ − cov)_ij|` over the diagonal and the edges of the graph.
    pub max_mismatch: f64,
}

fn moment_mismatch(w: &DMatrix<f64>, s: &DMatrix<f64>, g: &UndirectedGraph) -> f64 {
    let diag = (0..g.p()).map(|i| (w[(i, i)] - s[(i, i)]).abs());
    let edges = g.edges().into_iter().map(|(i, j)| (w[(i, j)] - s[(i, j)]).abs());
    diag.chain(edges).fold(0.0, f64::max)
}

/// Maximum-likelihood precision with zeros off `g`, by iterative proportional
/// scaling over the maximal cliques of `g`, starting from `diag(1 / cov_ii)`.
///
/// Each clique step sets `K_CC ← K_CC + cov_CC⁻¹ − ((K⁻¹)_CC)⁻¹`, which
/// matches the clique's moments exactly and never lowers the likelihood.
/// Stops once every edge and diagonal moment is within `tol`; running out of
/// sweeps returns the last iterate with `converged = false`.
pub fn fit_precision_on_graph(cov: &SymmetricMatrix, g: &UndirectedGraph, tol: f64, max_iter: usize) -> Result<GraphFit> {
    let p = cov.dim();
    if g.p() != p {
        return Err(Error::invalid(format!("graph has {} nodes, covariance {p}", g.p())));
    }
    if !cov.is_spd() {
        return Err(Error::NotPositiveDefinite("covariance for graph fit".into()));
    }
    let s = cov.values();
    let cliques = maximal_cliques(g);
    let clique_inverses: Vec<DMatrix<f64>> = cliques
        .iter()
        .map(|c| linalg::spd_inverse(&linalg::principal(s, c), "covariance block"))
        .collect::<Result<_>>()?;

    let mut k = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 / s[(i, i)] } else { 0.0 });
    let mut w = DMatrix::from_fn(p, p, |i, j| if i == j { s[(i, i)] } else { 0.0 });
    let mut mismatch = moment_mismatch(&w, s, g);
    let mut iterations = 0;
    while mismatch > tol && iterations < max_iter {
        for (c, s_inv) in cliques.iter().zip(&clique_inverses) {
            let w_cc = linalg::principal(&w, c);
            let w_cc_inv = linalg::spd_inverse(&w_cc, "fitted covariance block")?;
            linalg::add_padded(&mut k, c, &(s_inv - &w_cc_inv), 1.0);
            // W ← W + W_{·C} W_CC⁻¹ (S_CC − W_CC) W_CC⁻¹ W_{C·}
            let w_col = linalg::select_columns(&w, c);
            let a = &w_col * &w_cc_inv;
            let middle = linalg::principal(s, c) - &w_cc;
            w += &a * middle * a.transpose();
        }
        iterations += 1;
        k = linalg::symmetrize(k);
        w = linalg::spd_inverse(&k, "graph fit iterate")?;
        mismatch = moment_mismatch(&w, s, g);
    }
    Ok(GraphFit {
        precision: SymmetricMatrix::new(k, MatrixKind::Precision)?,
        converged: mismatch <= tol,
        iterations,
        max_mismatch: mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fastdecomp::decomposable_mle;
    use crate::graph::chordal_decomposition;
    use crate::synth;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn chain_data(n: usize, seed: u64) -> TimeSeriesDataset {
        let mut rng = synth::rng(seed);
        let mut x = DMatrix::zeros(n, 3);
        for r in 0..n {
            let a: f64 = rng.sample(StandardNormal);
            let b = a + rng.sample::<f64, _>(StandardNormal);
            let c = b + rng.sample::<f64, _>(StandardNormal);
            x[(r, 0)] = a;
            x[(r, 1)] = b;
            x[(r, 2)] = c;
        }
        TimeSeriesDataset::from_samples(x, "chain").unwrap()
    }

    fn with_sepset(skeleton: UndirectedGraph, i: usize, j: usize, s: Vec<usize>) -> PcResult {
        let p = skeleton.p();
        PcResult {
            skeleton,
            sepsets: BTreeMap::from([((i, j), s)]),
            moral_graph: UndirectedGraph::empty(p),
            max_degree_reached: 1,
        }
    }

    #[test]
    fn chain_skeleton_and_sepset() {
        let r = pc_skeleton(&chain_data(5000, 1), 0.01, 3).unwrap();
        assert_eq!(r.skeleton.edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(r.sepset(0, 2), Some(&[1][..]));
        assert_eq!(r.sepset(2, 0), Some(&[1][..]));
        assert_eq!(r.moral_graph.edges(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn independent_columns_give_empty_skeleton() {
        let k = SymmetricMatrix::new(DMatrix::identity(6, 6), MatrixKind::Precision).unwrap();
        let d = synth::sample_gaussian(&k, 2000, 5).unwrap();
        let r = pc_skeleton(&d, 0.001, 2).unwrap();
        assert_eq!(r.skeleton.edge_count(), 0);
        assert_eq!(r.max_degree_reached, 0);
        assert!(r.sepsets.values().all(Vec::is_empty));
        assert_eq!(r.sepsets.len(), 15);
    }

    #[test]
    fn level_zero_is_marginal_correlation_graph() {
        let g = synth::watts_strogatz(10, 4, 0.2, 2).unwrap();
        let k = synth::precision_from_graph(&g, 0.4, 3).unwrap();
        let d = synth::sample_gaussian(&k, 300, 4).unwrap();
        let alpha = 0.05;
        let r = pc_skeleton(&d, alpha, 0).unwrap();
        let corr = to_correlation(&empirical_covariance(&d)).unwrap();
        let crit = Normal::new(0.0, 1.0).unwrap().inverse_cdf(1.0 - alpha / 2.0);
        for i in 0..10 {
            for j in i + 1..10 {
                let rho = corr.get(i, j);
                let z = 0.5 * ((1.0 + rho) / (1.0 - rho)).ln();
                assert_eq!(r.skeleton.has_edge(i, j), (297.0f64).sqrt() * z.abs() > crit);
            }
        }
        assert!(r.sepsets.values().all(Vec::is_empty));
    }

    #[test]
    fn deeper_search_only_removes_edges() {
        let g = synth::watts_strogatz(12, 4, 0.3, 7).unwrap();
        let k = synth::precision_from_graph(&g, 0.5, 8).unwrap();
        let d = synth::sample_gaussian(&k, 400, 9).unwrap();
        let mut prev: Option<UndirectedGraph> = None;
        for depth in 0..4 {
            let r = pc_skeleton(&d, 0.05, depth).unwrap();
            assert!(r.sepsets.values().all(|s| s.len() <= depth));
            assert!(r.max_degree_reached <= depth);
            for (i, j) in r.skeleton.edges() {
                assert!(r.sepset(i, j).is_none());
            }
            assert!(r.skeleton.is_subgraph_of(&r.moral_graph));
            if let Some(prev) = prev {
                assert!(r.skeleton.is_subgraph_of(&prev));
            }
            prev = Some(r.skeleton);
        }
    }

    #[test]
    fn pc_rejects_bad_inputs() {
        let d = chain_data(4, 0);
        assert!(matches!(pc_skeleton(&d, 0.05, 1), Err(Error::InsufficientSamples(_))));
        assert!(pc_skeleton(&d, 0.0, 0).is_err());
        assert!(pc_skeleton(&d, 1.0, 0).is_err());
    }

    #[test]
    fn moralization_examples() {
        let path = UndirectedGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let collider = orient_and_moralize(&with_sepset(path.clone(), 0, 2, vec![]));
        assert_eq!(collider.edges(), vec![(0, 1), (0, 2), (1, 2)]);
        let chain = orient_and_moralize(&with_sepset(path, 0, 2, vec![1]));
        assert_eq!(chain.edges(), vec![(0, 1), (1, 2)]);
        let empty = PcResult {
            skeleton: UndirectedGraph::empty(4),
            sepsets: BTreeMap::new(),
            moral_graph: UndirectedGraph::empty(4),
            max_degree_reached: 0,
        };
        assert_eq!(orient_and_moralize(&empty).edge_count(), 0);
    }

    #[test]
    fn conflicting_orientations_stay_undirected() {
        // 0 - 1 - 2 - 3 with empty sepsets everywhere: colliders at 1 and 2
        // orient 1 - 2 both ways, so only the outer parents are married.
        let g = UndirectedGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let r = PcResult {
            skeleton: g,
            sepsets: BTreeMap::from([((0, 2), vec![]), ((1, 3), vec![]), ((0, 3), vec![])]),
            moral_graph: UndirectedGraph::empty(4),
            max_degree_reached: 0,
        };
        assert_eq!(orient_and_moralize(&r).edges(), vec![(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn complete_graph_fit_is_inverse() {
        let s = SymmetricMatrix::new(fastdecomp_testkit::random_spd(5, 0.3, 1), MatrixKind::Covariance).unwrap();
        let fit = fit_precision_on_graph(&s, &UndirectedGraph::complete(5), 1e-12, 10).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.iterations, 1);
        assert!((fit.precision.values() - s.inverse().unwrap().values()).amax() < 1e-10);
    }

    #[test]
    fn chordal_fit_matches_closed_form() {
        let s = SymmetricMatrix::new(fastdecomp_testkit::random_spd(3, 0.3, 2), MatrixKind::Covariance).unwrap();
        let g = UndirectedGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let fit = fit_precision_on_graph(&s, &g, 1e-13, 1000).unwrap();
        assert!(fit.converged);
        let closed = decomposable_mle(&s, &chordal_decomposition(&g).unwrap()).unwrap();
        assert!((fit.precision.values() - closed.values()).amax() < 1e-8);
    }

    #[test]
    fn four_cycle_matches_numerical_maximizer() {
        let s = fastdecomp_testkit::random_spd(4, 0.3, 3);
        let edges = [(0, 1), (1, 2), (2, 3), (0, 3)];
        let g = UndirectedGraph::from_edges(4, edges).unwrap();
        let cov = SymmetricMatrix::new(s.clone(), MatrixKind::Covariance).unwrap();
        let fit = fit_precision_on_graph(&cov, &g, 1e-10, 10_000).unwrap();
        assert!(fit.converged);
        let k = fit.precision.values();
        assert_eq!(k[(0, 2)], 0.0);
        assert_eq!(k[(1, 3)], 0.0);
        let w = k.clone().try_inverse().unwrap();
        for (i, j) in edges {
            assert!((w[(i, j)] - s[(i, j)]).abs() < 1e-6);
        }
        let oracle = fastdecomp_testkit::constrained_mle(&s, &edges);
        assert!((k - oracle).amax() < 1e-6);
        let init = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 / s[(i, i)] } else { 0.0 });
        assert!(
            fastdecomp_testkit::gaussian_loglik(k, &s).unwrap()
                >= fastdecomp_testkit::gaussian_loglik(&init, &s).unwrap()
        );
    }

    #[test]
    fn iteration_cap_is_flagged() {
        let s = SymmetricMatrix::new(fastdecomp_testkit::random_spd(6, 0.1, 4), MatrixKind::Covariance).unwrap();
        let g = UndirectedGraph::from_edges(6, fastdecomp_testkit::random_graph(6, 0.5, 5)).unwrap();
        let fit = fit_precision_on_graph(&s, &g, 0.0, 1).unwrap();
        assert!(!fit.converged || g.edge_count() == 0);
        assert_eq!(fit.iterations, 1);
    }
}
