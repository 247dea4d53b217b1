//! Greedy learning of a decomposable Gaussian model.
//!
//! Starting from the complete graph, every edge whose full-conditional
//! partial correlation is not significant is removed. The pruned graph is
//! ordered by reverse Cuthill–McKee, completed to a banded chordal graph, and
//! its cliques and separators are read off by [`clique_walk`]. The precision
//! is assembled from Ledoit-Wolf estimates on each clique and separator:
//!
//! ```text
//! K = Σ_C [LW(X_C)⁻¹]⁰ − Σ_S [LW(X_S)⁻¹]⁰
//! ```
//!
//! where `[·]⁰` pads a block with zeros to `p × p`.
//!
//! Partial correlations use the standard sign, `ρ_ij = −K_ij / √(K_ii K_jj)`.
//! The edge test only looks at `|z|`, so the sign never affects pruning.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::covariance::{ledoit_wolf_centered, MatrixKind, SymmetricMatrix};
use crate::dataio::TimeSeriesDataset;
use crate::graph::{clique_walk, rcm_ordering, CliqueDecomposition, UndirectedGraph};
use crate::linalg;
use crate::{Error, Result};

/// `ρ_ij = −K_ij / √(K_ii K_jj)` off the diagonal, ones on it.
pub fn partial_correlations(precision: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    if precision.kind() != MatrixKind::Precision {
        return Err(Error::invalid(format!(
            "expected a precision, got {:?}",
            precision.kind()
        )));
    }
    let k = precision.values();
    let p = precision.dim();
    if let Some(i) = (0..p).find(|&i| !(k[(i, i)] > 0.0)) {
        return Err(Error::invalid(format!(
            "non-positive precision diagonal {} at index {i}",
            k[(i, i)]
        )));
    }
    let rho = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            (-k[(i, j)] / (k[(i, i)] * k[(j, j)]).sqrt()).clamp(-1.0, 1.0)
        }
    });
    SymmetricMatrix::symmetrized(rho, MatrixKind::Correlation)
}

/// Fisher's z-transform `½ ln((1 + ρ) / (1 − ρ))`.
pub fn fisher_z(rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid(format!("|rho| must be below 1, got {rho}")));
    }
    Ok(0.5 * ((1.0 + rho) / (1.0 - rho)).ln())
}

/// Keep the edge when `√(n − p − 1) |z| ≥ beta`. Under independence `z` is
/// roughly `N(0, 1/(n − p − 1))`, so `beta` is a standard-normal quantile.
pub fn ci_edge_test(z: f64, n: usize, p: usize, beta: f64) -> Result<bool> {
    let dof = null_dof(n, p)?;
    check_beta(beta)?;
    Ok(dof.sqrt() * z.abs() >= beta)
}

fn null_dof(n: usize, p: usize) -> Result<f64> {
    if n <= p + 1 {
        return Err(Error::InsufficientSamples(format!(
            "insufficient samples for the z null distribution: n = {n}, p = {p} (need n - p - 1 >= 1)"
        )));
    }
    Ok((n - p - 1) as f64)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::invalid(format!("beta must be >= 0, got {beta}")));
    }
    Ok(())
}

/// Complete graph minus every edge failing [`ci_edge_test`].
pub fn prune_graph(partial: &SymmetricMatrix, n: usize, beta: f64) -> Result<UndirectedGraph> {
    let p = partial.dim();
    let scale = null_dof(n, p)?.sqrt();
    check_beta(beta)?;
    let mut g = UndirectedGraph::empty(p);
    for i in 0..p {
        for j in (i + 1)..p {
            let rho = partial.get(i, j);
            // |ρ| = 1 only arises from rounding on a near-singular estimate.
            let keep = match fisher_z(rho) {
                Ok(z) => scale * z.abs() >= beta,
                Err(_) => true,
            };
            if keep {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}

/// Closed-form maximum-likelihood precision of a decomposable model:
/// `Σ_C [(cov_CC)⁻¹]⁰ − Σ_S [(cov_SS)⁻¹]⁰`.
pub fn decomposable_mle(cov: &SymmetricMatrix, decomposition: &CliqueDecomposition) -> Result<SymmetricMatrix> {
    let p = cov.dim();
    decomposition.validate(p)?;
    assemble(p, decomposition, |idx| {
        linalg::spd_inverse(&linalg::principal(cov.values(), idx), "")
            .map_err(|_| Error::Singular(format!("covariance restricted to {idx:?}")))
    })
}

/// Sums padded clique blocks and subtracts padded separator blocks. Blocks
/// are computed in parallel and added in a fixed order.
fn assemble<F>(p: usize, d: &CliqueDecomposition, block: F) -> Result<SymmetricMatrix>
where
    F: Fn(&[usize]) -> Result<DMatrix<f64>> + Sync,
{
    let terms: Vec<(&[usize], f64)> = d
        .cliques()
        .iter()
        .map(|c| (c.as_slice(), 1.0))
        .chain(
            d.separators()
                .iter()
                .filter(|s| !s.is_empty())
                .map(|s| (s.as_slice(), -1.0)),
        )
        .collect();
    let blocks: Vec<DMatrix<f64>> = terms
        .par_iter()
        .map(|(idx, _)| block(idx))
        .collect::<Result<_>>()?;
    let mut k = DMatrix::zeros(p, p);
    for ((idx, sign), b) in terms.iter().zip(&blocks) {
        linalg::add_padded(&mut k, idx, b, *sign);
    }
    SymmetricMatrix::symmetrized(k, MatrixKind::Precision)
}

#[derive(Debug, Clone)]
pub struct FastDecompResult {
    pub precision: SymmetricMatrix,
    pub decomposition: CliqueDecomposition,
    /// Graph left after the conditional-independence tests.
    pub pruned_graph: UndirectedGraph,
    /// Chordal completion whose maximal cliques are the decomposition's.
    pub completed_graph: UndirectedGraph,
    pub beta: f64,
    pub fill_edges_added: usize,
    pub peripheral_node: usize,
    /// Shrinkage intensity of the full-data Ledoit-Wolf estimate.
    pub shrinkage: f64,
}

/// Learns a decomposable precision from `data` at test threshold `beta`.
pub fn fast_decomp(data: &TimeSeriesDataset, beta: f64) -> Result<FastDecompResult> {
    let (n, p) = (data.n(), data.p());
    null_dof(n, p)?;
    check_beta(beta)?;
    let centered = linalg::center_columns(data.samples());

    let lw = ledoit_wolf_centered(&centered);
    let k_lw = lw.covariance.inverse()?;
    let partial = partial_correlations(&k_lw)?;
    let pruned_graph = prune_graph(&partial, n, beta)?;

    let rcm = rcm_ordering(&pruned_graph);
    let walk = clique_walk(&pruned_graph, &rcm.ordering)?;

    let precision = assemble(p, &walk.decomposition, |idx| {
        let sub = linalg::select_columns(&centered, idx);
        let est = ledoit_wolf_centered(&sub);
        linalg::spd_inverse(est.covariance.values(), "Ledoit-Wolf clique estimate")
    })?;
    if !precision.is_spd() {
        return Err(Error::NotPositiveDefinite(
            "assembled decomposable precision".into(),
        ));
    }
    Ok(FastDecompResult {
        precision,
        decomposition: walk.decomposition,
        pruned_graph,
        completed_graph: walk.completed,
        beta,
        fill_edges_added: walk.fill_edges,
        peripheral_node: rcm.peripheral_node,
        shrinkage: lw.shrinkage,
    })
}
