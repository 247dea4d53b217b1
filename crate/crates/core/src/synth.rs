//! Synthetic ground truth: small-world graphs, sparse precisions with a known
//! support, and Gaussian samples.
//!
//! All randomness comes from [`ChaCha8Rng`] seeded with a `u64`, which is
//! portable across platforms. Helpers that need several independent streams
//! derive them with [`ChaCha8Rng::set_stream`] rather than reseeding.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::covariance::{MatrixKind, SymmetricMatrix};
use crate::dataio::TimeSeriesDataset;
use crate::graph::UndirectedGraph;
use crate::linalg;
use crate::{Error, Result};

/// Recorded in manifests so outputs name the generator that produced them.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha), seed_from_u64, per-subject set_stream";

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` under a common seed.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Watts–Strogatz small-world graph: a ring lattice where each node links to
/// its `k` nearest neighbors, after which every lattice edge `(i, i + j)` is
/// rewired with probability `rewire_prob` to `(i, t)` for a uniform target `t`
/// that is neither `i` nor already adjacent to it.
pub fn watts_strogatz(p: usize, k: usize, rewire_prob: f64, seed: u64) -> Result<UndirectedGraph> {
    if k % 2 != 0 || k >= p {
        return Err(Error::invalid(format!(
            "k must be even and below p (k = {k}, p = {p})"
        )));
    }
    if !(0.0..=1.0).contains(&rewire_prob) {
        return Err(Error::invalid(format!("rewire probability {rewire_prob} outside [0, 1]")));
    }
    let mut g = UndirectedGraph::empty(p);
    for i in 0..p {
        for j in 1..=k / 2 {
            g.add_edge(i, (i + j) % p)?;
        }
    }
    let mut rng = rng(seed);
    for j in 1..=k / 2 {
        for i in 0..p {
            let v = (i + j) % p;
            if !rng.random_bool(rewire_prob) || !g.has_edge(i, v) {
                continue;
            }
            let candidates: Vec<usize> = (0..p).filter(|&t| t != i && !g.has_edge(i, t)).collect();
            if candidates.is_empty() {
                continue;
            }
            let t = candidates[rng.random_range(0..candidates.len())];
            g.remove_edge(i, v);
            g.add_edge(i, t)?;
        }
    }
    Ok(g)
}

/// Disjoint union of `blocks` complete graphs of `size` nodes each.
pub fn block_graph(blocks: usize, size: usize) -> UndirectedGraph {
    let p = blocks * size;
    let mut g = UndirectedGraph::empty(p);
    for b in 0..blocks {
        for i in 0..size {
            for j in (i + 1)..size {
                g.add_edge(b * size + i, b * size + j).expect("in range");
            }
        }
    }
    g
}

/// Precision with support exactly `g`: off-diagonal entries of random sign
/// and magnitude in `[strength / 2, strength]`, diagonal set to one plus the
/// absolute row sum. Diagonal dominance keeps every eigenvalue above one.
pub fn precision_from_graph(g: &UndirectedGraph, strength: f64, seed: u64) -> Result<SymmetricMatrix> {
    if !(strength > 0.0) {
        return Err(Error::invalid(format!("strength must be positive, got {strength}")));
    }
    let p = g.p();
    let mut rng = rng(seed);
    let mut k = DMatrix::zeros(p, p);
    for (i, j) in g.edges() {
        let magnitude = rng.random_range(strength / 2.0..=strength);
        let value = if rng.random_bool(0.5) { magnitude } else { -magnitude };
        k[(i, j)] = value;
        k[(j, i)] = value;
    }
    for i in 0..p {
        let row: f64 = k.row(i).iter().map(|v: &f64| v.abs()).sum();
        k[(i, i)] = 1.0 + row;
    }
    SymmetricMatrix::new(k, MatrixKind::Precision)
}

/// `n` draws from `N(0, K⁻¹)`: with `K = LLᵀ`, each sample solves `Lᵀx = z`
/// for a standard-normal `z`.
pub fn sample_gaussian(precision: &SymmetricMatrix, n: usize, seed: u64) -> Result<TimeSeriesDataset> {
    sample_with(precision, n, &mut rng(seed))
}

fn sample_with(precision: &SymmetricMatrix, n: usize, rng: &mut ChaCha8Rng) -> Result<TimeSeriesDataset> {
    let p = precision.dim();
    let chol = linalg::cholesky(precision.values())
        .ok_or_else(|| Error::NotPositiveDefinite("precision for sampling".into()))?;
    let lt = chol.l().transpose();
    let mut x = DMatrix::zeros(n, p);
    for r in 0..n {
        let z = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sample = lt
            .solve_upper_triangular(&z)
            .expect("Cholesky factor has a positive diagonal");
        x.row_mut(r).copy_from(&sample.transpose());
    }
    // Bypass the n >= 2 check: a single draw is a valid sample even though no
    // covariance can be formed from it.
    let labels = (0..p).map(|i| format!("x{i}")).collect();
    Ok(TimeSeriesDataset::new_unchecked(x, labels, "synthetic"))
}

/// Several subjects drawn from the same precision, subject `s` using stream
/// `s` of `seed`.
pub fn sample_subjects(
    precision: &SymmetricMatrix,
    n_per_subject: usize,
    subjects: usize,
    seed: u64,
) -> Result<Vec<TimeSeriesDataset>> {
    (0..subjects)
        .map(|s| {
            let mut r = rng_stream(seed, s as u64);
            Ok(sample_with(precision, n_per_subject, &mut r)?.with_subject_id(format!("subject{s:02}")))
        })
        .collect()
}
