use std::collections::VecDeque;

use super::UndirectedGraph;

/// Maximum number of eccentricity-ascent rounds in the peripheral search.
const PERIPHERAL_ROUNDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RcmOrdering {
    /// Pseudo-peripheral start node of the first component.
    pub peripheral_node: usize,
    /// Nodes listed first to last.
    pub ordering: Vec<usize>,
}

/// BFS levels from `start`, restricted to its component.
fn bfs_levels(g: &UndirectedGraph, start: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; g.p()];
    seen[start] = true;
    let mut levels = vec![vec![start]];
    loop {
        let mut next = Vec::new();
        for &u in levels.last().expect("non-empty") {
            for v in g.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    next.push(v);
                }
            }
        }
        if next.is_empty() {
            return levels;
        }
        levels.push(next);
    }
}

fn min_degree(g: &UndirectedGraph, nodes: &[usize]) -> usize {
    *nodes
        .iter()
        .min_by_key(|&&v| (g.degree(v), v))
        .expect("non-empty node set")
}

/// Pseudo-peripheral node of the component containing `nodes`: start from
/// its minimum-degree node and hop to the minimum-degree node of the last BFS
/// level while the eccentricity keeps growing.
pub fn pseudo_peripheral_node(g: &UndirectedGraph, nodes: &[usize]) -> usize {
    let mut current = min_degree(g, nodes);
    let mut levels = bfs_levels(g, current);
    for _ in 0..PERIPHERAL_ROUNDS {
        let candidate = min_degree(g, levels.last().expect("non-empty"));
        let cand_levels = bfs_levels(g, candidate);
        if cand_levels.len() <= levels.len() {
            break;
        }
        current = candidate;
        levels = cand_levels;
    }
    current
}

/// Reverse Cuthill–McKee ordering. Components are handled in order of their
/// smallest node; within a component, neighbors are queued by increasing
/// degree, then index.
pub fn rcm_ordering(g: &UndirectedGraph) -> RcmOrdering {
    let mut visited = vec![false; g.p()];
    let mut ordering = Vec::with_capacity(g.p());
    let mut peripheral_node = None;
    for comp in g.components() {
        let start = pseudo_peripheral_node(g, &comp);
        peripheral_node.get_or_insert(start);
        let mut cm = Vec::with_capacity(comp.len());
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            cm.push(u);
            let mut next: Vec<usize> = g.neighbors(u).filter(|&v| !visited[v]).collect();
            next.sort_by_key(|&v| (g.degree(v), v));
            for v in next {
                visited[v] = true;
                queue.push_back(v);
            }
        }
        ordering.extend(cm.into_iter().rev());
    }
    RcmOrdering {
        peripheral_node: peripheral_node.unwrap_or(0),
        ordering,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::bandwidth;

    #[test]
    fn scrambled_path_gets_bandwidth_one() {
        // Path 3 - 0 - 4 - 1 - 2
        let g = UndirectedGraph::from_edges(5, [(3, 0), (0, 4), (4, 1), (1, 2)]).unwrap();
        let r = rcm_ordering(&g);
        assert_eq!(bandwidth(&g, &r.ordering).unwrap(), 1);
        assert!(r.peripheral_node == 3 || r.peripheral_node == 2);
    }

    #[test]
    fn complete_graph_bandwidth_is_fixed() {
        let g = UndirectedGraph::complete(4);
        assert_eq!(bandwidth(&g, &rcm_ordering(&g).ordering).unwrap(), 3);
    }

    #[test]
    fn star_reaches_the_exhaustive_optimum() {
        let edges = [(0, 1), (0, 2), (0, 3)];
        let g = UndirectedGraph::from_edges(4, edges).unwrap();
        let best = fastdecomp_testkit::min_bandwidth_exhaustive(4, &edges);
        assert_eq!(best, 2);
        assert_eq!(bandwidth(&g, &rcm_ordering(&g).ordering).unwrap(), best);
    }

    #[test]
    fn components_are_concatenated() {
        let g = UndirectedGraph::from_edges(6, [(0, 5), (1, 2), (2, 3)]).unwrap();
        let r = rcm_ordering(&g);
        let mut sorted = r.ordering.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..6).collect::<Vec<_>>());
        assert_eq!(bandwidth(&g, &r.ordering).unwrap(), 1);
        // Determinism.
        assert_eq!(r, rcm_ordering(&g));
    }
}
