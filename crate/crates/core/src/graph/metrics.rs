use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{bandwidth, maximal_cliques, rcm_ordering, CliqueDecomposition, UndirectedGraph};
use crate::{Error, Result};

/// Largest graph for which [`metrics`] enumerates maximal cliques itself.
pub const MAX_ENUMERATION_NODES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMetrics {
    pub node_count: usize,
    pub edge_count: usize,
    /// `2|E| / p²`.
    pub filling_factor: f64,
    /// `2|E| / (p (p - 1))`, the fraction of possible node pairs.
    pub filling_factor_offdiag: f64,
    pub max_clique_width: usize,
    /// Under the decomposition's ordering when one is given, otherwise under
    /// the graph's RCM ordering.
    pub bandwidth: usize,
    pub clustering_coefficient: f64,
    /// Mean BFS distance over ordered pairs joined by a path; infinite (null
    /// in JSON) when no pair is connected.
    #[serde(serialize_with = "ser_maybe_inf", deserialize_with = "de_maybe_inf")]
    pub average_shortest_path: f64,
    pub connected: bool,
}

fn ser_maybe_inf<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_some(v)
    } else {
        s.serialize_none()
    }
}

fn de_maybe_inf<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

fn clustering(g: &UndirectedGraph) -> f64 {
    let p = g.p();
    if p == 0 {
        return 0.0;
    }
    let total: f64 = (0..p)
        .map(|v| {
            let nb: Vec<usize> = g.neighbors(v).collect();
            let d = nb.len();
            if d < 2 {
                return 0.0;
            }
            let links = nb
                .iter()
                .enumerate()
                .map(|(a, &u)| nb[a + 1..].iter().filter(|&&w| g.has_edge(u, w)).count())
                .sum::<usize>();
            links as f64 / (d * (d - 1) / 2) as f64
        })
        .sum();
    total / p as f64
}

/// `(sum of distances, number of reachable ordered pairs)` from `src`.
fn bfs_distances(g: &UndirectedGraph, src: usize) -> (u64, u64) {
    let mut dist = vec![usize::MAX; g.p()];
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    let (mut sum, mut count) = (0u64, 0u64);
    while let Some(u) = queue.pop_front() {
        for v in g.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                sum += dist[v] as u64;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    (sum, count)
}

/// Summary statistics of `g`. Without a decomposition the clique width comes
/// from maximal-clique enumeration, which is refused above
/// [`MAX_ENUMERATION_NODES`] nodes.
pub fn metrics(g: &UndirectedGraph, decomposition: Option<&CliqueDecomposition>) -> Result<GraphMetrics> {
    let p = g.p();
    let (max_clique_width, bw) = match decomposition {
        Some(d) => {
            if d.p() != p {
                return Err(Error::invalid(format!(
                    "decomposition covers {} nodes, graph has {p}",
                    d.p()
                )));
            }
            (d.max_clique_width(), bandwidth(g, d.ordering())?)
        }
        None => {
            if p > MAX_ENUMERATION_NODES {
                return Err(Error::invalid(format!(
                    "maximal-clique enumeration is limited to {MAX_ENUMERATION_NODES} nodes \
                     (got {p}); supply a decomposition"
                )));
            }
            let width = maximal_cliques(g).iter().map(Vec::len).max().unwrap_or(0);
            (width, bandwidth(g, &rcm_ordering(g).ordering)?)
        }
    };
    let (sum, count) = (0..p)
        .into_par_iter()
        .map(|s| bfs_distances(g, s))
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let edges = g.edge_count();
    let pf = p as f64;
    Ok(GraphMetrics {
        node_count: p,
        edge_count: edges,
        filling_factor: if p == 0 { 0.0 } else { 2.0 * edges as f64 / (pf * pf) },
        filling_factor_offdiag: if p < 2 { 0.0 } else { 2.0 * edges as f64 / (pf * (pf - 1.0)) },
        max_clique_width,
        bandwidth: bw,
        clustering_coefficient: clustering(g),
        average_shortest_path: if count == 0 {
            f64::INFINITY
        } else {
            sum as f64 / count as f64
        },
        connected: p > 0 && count == (p * (p - 1)) as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring_lattice(p: usize, k: usize) -> UndirectedGraph {
        UndirectedGraph::from_edges(
            p,
            (0..p).flat_map(|i| (1..=k / 2).map(move |j| (i, (i + j) % p))),
        )
        .unwrap()
    }

    #[test]
    fn complete_graph() {
        let m = metrics(&UndirectedGraph::complete(4), None).unwrap();
        assert_eq!(m.clustering_coefficient, 1.0);
        assert_eq!(m.average_shortest_path, 1.0);
        assert_eq!(m.max_clique_width, 4);
        assert_eq!(m.filling_factor, 12.0 / 16.0);
        assert_eq!(m.filling_factor_offdiag, 1.0);
        assert!(m.connected);
    }

    #[test]
    fn five_cycle_has_no_triangles() {
        let m = metrics(&ring_lattice(5, 2), None).unwrap();
        assert_eq!(m.clustering_coefficient, 0.0);
        assert_eq!(m.max_clique_width, 2);
    }

    #[test]
    fn ring_lattice_clustering_matches_formula() {
        let k = 4.0;
        let formula = 3.0 * (k - 2.0) / (4.0 * (k - 1.0));
        let m = metrics(&ring_lattice(20, 4), None).unwrap();
        assert!((m.clustering_coefficient - formula).abs() < 1e-12);
        assert_eq!(formula, 0.5);
    }

    #[test]
    fn disconnected_and_edgeless_graphs() {
        let m = metrics(&UndirectedGraph::empty(3), None).unwrap();
        assert!(m.average_shortest_path.is_infinite());
        assert!(!m.connected);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"average_shortest_path\":null"));
        let back: GraphMetrics = serde_json::from_str(&json).unwrap();
        assert!(back.average_shortest_path.is_infinite());

        let g = UndirectedGraph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        let m = metrics(&g, None).unwrap();
        assert_eq!(m.average_shortest_path, 1.0);
        assert!(!m.connected);
    }

    #[test]
    fn large_graph_needs_decomposition() {
        let g = ring_lattice(70, 2);
        assert!(metrics(&g, None).is_err());
        let order: Vec<usize> = (0..70).collect();
        let walk = crate::graph::clique_walk(&g, &order).unwrap();
        let m = metrics(&g, Some(&walk.decomposition)).unwrap();
        assert_eq!(m.max_clique_width, walk.decomposition.max_clique_width());
        assert_eq!(m.bandwidth, 69);
    }
}
