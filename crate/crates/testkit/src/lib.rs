//! Reference computations for tests.
//!
//! Everything in here is deliberately naive: brute force, enumeration, or a
//! generic optimizer. None of it shares code with the library algorithms it
//! is used to check.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Maximize `log det K - tr(K S)` over SPD `K` whose off-diagonal support is
/// restricted to `edges`, using damped Newton iterations on the free entries.
pub fn constrained_mle(s: &DMatrix<f64>, edges: &[(usize, usize)]) -> DMatrix<f64> {
    let p = s.nrows();
    // Free parameters: each diagonal entry, then each allowed off-diagonal pair.
    let mut params: Vec<(usize, usize)> = (0..p).map(|i| (i, i)).collect();
    for &(i, j) in edges {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        if a != b && !params.contains(&(a, b)) {
            params.push((a, b));
        }
    }
    let m = params.len();

    let build = |theta: &DVector<f64>| {
        let mut k = DMatrix::zeros(p, p);
        for (idx, &(i, j)) in params.iter().enumerate() {
            k[(i, j)] = theta[idx];
            k[(j, i)] = theta[idx];
        }
        k
    };
    let objective = |k: &DMatrix<f64>| -> Option<f64> {
        let chol = k.clone().cholesky()?;
        let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Some(logdet - (k * s).trace())
    };
    let units = |&(i, j): &(usize, usize)| -> Vec<(usize, usize)> {
        if i == j {
            vec![(i, i)]
        } else {
            vec![(i, j), (j, i)]
        }
    };

    let mut theta = DVector::zeros(m);
    for i in 0..p {
        theta[i] = 1.0 / s[(i, i)];
    }
    for _ in 0..200 {
        let k = build(&theta);
        let w = k.clone().try_inverse().expect("iterate must stay invertible");
        let diff = &w - s;
        let mut grad = DVector::zeros(m);
        for (a, pa) in params.iter().enumerate() {
            grad[a] = units(pa).iter().map(|&(r, c)| diff[(r, c)]).sum();
        }
        if grad.amax() < 1e-13 {
            break;
        }
        // Hessian of log det: -tr(W E_a W E_b).
        let mut hess = DMatrix::zeros(m, m);
        for (a, pa) in params.iter().enumerate() {
            let ua = units(pa);
            for (b, pb) in params.iter().enumerate().skip(a) {
                let ub = units(pb);
                let mut t = 0.0;
                for &(r, c) in &ua {
                    for &(r2, c2) in &ub {
                        t += w[(c2, r)] * w[(c, r2)];
                    }
                }
                hess[(a, b)] = -t;
                hess[(b, a)] = -t;
            }
        }
        let step = (-hess)
            .cholesky()
            .expect("negative Hessian is positive definite")
            .solve(&grad);
        let f0 = objective(&k).unwrap();
        let mut t = 1.0;
        loop {
            let cand = &theta + &step * t;
            if let Some(f) = objective(&build(&cand)) {
                if f >= f0 - 1e-14 {
                    theta = cand;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-12 {
                return build(&theta);
            }
        }
    }
    build(&theta)
}

/// `log det K - tr(K S)` halved, or `None` if `K` is not positive definite.
pub fn gaussian_loglik(k: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<f64> {
    let chol = k.clone().cholesky()?;
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Some(0.5 * (logdet - (k * s).trace()))
}

fn adjacency(p: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; p]; p];
    for &(i, j) in edges {
        adj[i][j] = true;
        adj[j][i] = true;
    }
    adj
}

/// Chordality by exhaustive search for an induced cycle of length at least 4.
/// Exponential in `p`; intended for `p <= 10`.
pub fn is_chordal_exhaustive(p: usize, edges: &[(usize, usize)]) -> bool {
    let adj = adjacency(p, edges);
    for mask in 0u32..(1 << p) {
        if mask.count_ones() < 4 {
            continue;
        }
        let nodes: Vec<usize> = (0..p).filter(|&i| mask & (1 << i) != 0).collect();
        let all_deg_two = nodes
            .iter()
            .all(|&u| nodes.iter().filter(|&&v| adj[u][v]).count() == 2);
        if !all_deg_two {
            continue;
        }
        // Induced 2-regular subgraph: a single cycle iff connected.
        let mut seen = vec![nodes[0]];
        let mut stack = vec![nodes[0]];
        while let Some(u) = stack.pop() {
            for &v in &nodes {
                if adj[u][v] && !seen.contains(&v) {
                    seen.push(v);
                    stack.push(v);
                }
            }
        }
        if seen.len() == nodes.len() {
            return false;
        }
    }
    true
}

/// True when `cycle` is an induced (chordless) cycle of length >= 4.
pub fn is_chordless_cycle(p: usize, edges: &[(usize, usize)], cycle: &[usize]) -> bool {
    let adj = adjacency(p, edges);
    let len = cycle.len();
    if len < 4 {
        return false;
    }
    for a in 0..len {
        for b in (a + 1)..len {
            let consecutive = b == a + 1 || (a == 0 && b == len - 1);
            if adj[cycle[a]][cycle[b]] != consecutive {
                return false;
            }
        }
    }
    true
}

/// Partial correlation of variables `i` and `j` given all others, from the
/// residual covariance after regressing both on the remaining variables.
pub fn partial_corr_by_regression(cov: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    let p = cov.nrows();
    let rest: Vec<usize> = (0..p).filter(|&k| k != i && k != j).collect();
    let pair = [i, j];
    let sub = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| cov[(rows[r], cols[c])])
    };
    let s_pp = sub(&pair, &pair);
    let resid = if rest.is_empty() {
        s_pp
    } else {
        let s_pr = sub(&pair, &rest);
        let s_rr = sub(&rest, &rest);
        let coef = s_rr.lu().solve(&s_pr.transpose()).unwrap();
        s_pp - &s_pr * coef
    };
    resid[(0, 1)] / (resid[(0, 0)] * resid[(1, 1)]).sqrt()
}

/// Ledoit-Wolf shrinkage intensity toward `mu * I`, written out with explicit
/// loops over samples and entries. `rows` holds one observation per row.
pub fn ledoit_wolf_intensity_bruteforce(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    let p = rows[0].len();
    let mut mean = vec![0.0; p];
    for r in rows {
        for k in 0..p {
            mean[k] += r[k] / n as f64;
        }
    }
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut s = vec![vec![0.0; p]; p];
    for r in &centered {
        for a in 0..p {
            for b in 0..p {
                s[a][b] += r[a] * r[b] / n as f64;
            }
        }
    }
    let mu = (0..p).map(|a| s[a][a]).sum::<f64>() / p as f64;
    let mut d2 = 0.0;
    for a in 0..p {
        for b in 0..p {
            let t = if a == b { mu } else { 0.0 };
            d2 += (s[a][b] - t).powi(2);
        }
    }
    let mut b2 = 0.0;
    for r in &centered {
        for a in 0..p {
            for b in 0..p {
                b2 += (r[a] * r[b] - s[a][b]).powi(2);
            }
        }
    }
    b2 /= (n * n) as f64;
    if d2 <= 0.0 {
        return 1.0;
    }
    b2.min(d2) / d2
}

/// Random SPD matrix `A Aᵀ / p + shift I`.
pub fn random_spd(p: usize, shift: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() / p as f64 + DMatrix::identity(p, p) * shift
}

/// Random chordal graph: a random graph triangulated by the elimination game
/// under a random vertex order. Returns sorted edge pairs `(i, j)` with `i < j`.
pub fn random_chordal_graph(p: usize, density: f64, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj = vec![vec![false; p]; p];
    for i in 0..p {
        for j in (i + 1)..p {
            if rng.random_bool(density) {
                adj[i][j] = true;
                adj[j][i] = true;
            }
        }
    }
    let mut order: Vec<usize> = (0..p).collect();
    for i in (1..p).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut eliminated = vec![false; p];
    for &v in &order {
        let later: Vec<usize> = (0..p).filter(|&u| adj[v][u] && !eliminated[u]).collect();
        for &a in &later {
            for &b in &later {
                if a != b {
                    adj[a][b] = true;
                }
            }
        }
        eliminated[v] = true;
    }
    random_graph_edges(&adj)
}

/// Erdős–Rényi graph edges, `i < j`.
pub fn random_graph(p: usize, density: f64, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj = vec![vec![false; p]; p];
    for i in 0..p {
        for j in (i + 1)..p {
            if rng.random_bool(density) {
                adj[i][j] = true;
                adj[j][i] = true;
            }
        }
    }
    random_graph_edges(&adj)
}

fn random_graph_edges(adj: &[Vec<bool>]) -> Vec<(usize, usize)> {
    let p = adj.len();
    let mut edges = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            if adj[i][j] {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Bandwidth of every ordering of `p <= 8` nodes; returns the minimum.
pub fn min_bandwidth_exhaustive(p: usize, edges: &[(usize, usize)]) -> usize {
    fn rec(
        perm: &mut Vec<usize>,
        used: &mut Vec<bool>,
        edges: &[(usize, usize)],
        best: &mut usize,
    ) {
        let p = used.len();
        if perm.len() == p {
            let mut pos = vec![0; p];
            for (k, &v) in perm.iter().enumerate() {
                pos[v] = k;
            }
            let bw = edges
                .iter()
                .map(|&(i, j)| pos[i].abs_diff(pos[j]))
                .max()
                .unwrap_or(0);
            *best = (*best).min(bw);
            return;
        }
        for v in 0..p {
            if !used[v] {
                used[v] = true;
                perm.push(v);
                rec(perm, used, edges, best);
                perm.pop();
                used[v] = false;
            }
        }
    }
    let mut best = usize::MAX;
    rec(&mut Vec::new(), &mut vec![false; p], edges, &mut best);
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn newton_oracle_recovers_unconstrained_inverse() {
        let s = random_spd(4, 0.5, 3);
        let all: Vec<(usize, usize)> = (0..4)
            .flat_map(|i| ((i + 1)..4).map(move |j| (i, j)))
            .collect();
        let k = constrained_mle(&s, &all);
        let inv = s.try_inverse().unwrap();
        assert!((k - inv).amax() < 1e-9);
    }

    #[test]
    fn exhaustive_chordality_on_small_cases() {
        assert!(is_chordal_exhaustive(3, &[(0, 1), (1, 2), (0, 2)]));
        assert!(!is_chordal_exhaustive(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]));
        assert!(is_chordal_exhaustive(4, &[(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)]));
    }

    #[test]
    fn elimination_game_output_is_chordal() {
        for seed in 0..20 {
            let e = random_chordal_graph(7, 0.3, seed);
            assert!(is_chordal_exhaustive(7, &e));
        }
    }
}
