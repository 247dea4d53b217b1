use serde::{Deserialize, Serialize};

use super::{check_permutation, is_chordal, positions, UndirectedGraph};
use crate::{Error, Result};

/// Ordered cliques `C_0, C_1, ...` and separators `S_0, S_1, ...` of a
/// chordal graph, with `S_k` joining `C_{k+1}` to the cliques before it.
///
/// Cliques and separators are stored as sorted node lists. Construction checks
/// coverage, the running-intersection property
/// (`S_k = C_{k+1} ∩ (C_0 ∪ … ∪ C_k)` and `S_k` inside a single earlier
/// clique) and chordality of the union of the cliques.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CliqueDecomposition {
    ordering: Vec<usize>,
    cliques: Vec<Vec<usize>>,
    separators: Vec<Vec<usize>>,
}

#[derive(Deserialize)]
struct DecompositionRecord {
    ordering: Vec<usize>,
    cliques: Vec<Vec<usize>>,
    separators: Vec<Vec<usize>>,
}

impl<'de> Deserialize<'de> for CliqueDecomposition {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let rec = DecompositionRecord::deserialize(de)?;
        let p = rec.ordering.len();
        CliqueDecomposition::new(rec.ordering, rec.cliques, rec.separators, p)
            .map_err(serde::de::Error::custom)
    }
}

impl CliqueDecomposition {
    pub fn new(
        ordering: Vec<usize>,
        mut cliques: Vec<Vec<usize>>,
        mut separators: Vec<Vec<usize>>,
        p: usize,
    ) -> Result<Self> {
        for set in cliques.iter_mut().chain(separators.iter_mut()) {
            set.sort_unstable();
            set.dedup();
        }
        let d = Self {
            ordering,
            cliques,
            separators,
        };
        d.validate(p)?;
        Ok(d)
    }

    /// Checks every structural invariant against a `p`-node graph.
    pub fn validate(&self, p: usize) -> Result<()> {
        check_permutation(&self.ordering, p)?;
        if p == 0 {
            return Ok(());
        }
        if self.cliques.is_empty() || self.separators.len() + 1 != self.cliques.len() {
            return Err(Error::invalid(format!(
                "{} cliques need {} separators, got {}",
                self.cliques.len(),
                self.cliques.len().saturating_sub(1),
                self.separators.len()
            )));
        }
        let mut covered = vec![false; p];
        for (k, c) in self.cliques.iter().enumerate() {
            if c.is_empty() || c.iter().any(|&v| v >= p) {
                return Err(Error::invalid(format!("clique {k} is empty or out of range")));
            }
            if k > 0 {
                let sep = &self.separators[k - 1];
                let expected: Vec<usize> = c.iter().copied().filter(|&v| covered[v]).collect();
                if sep != &expected {
                    return Err(Error::invalid(format!(
                        "separator {} is {sep:?}, clique {k} meets earlier cliques in {expected:?}",
                        k - 1
                    )));
                }
                if !self.cliques[..k].iter().any(|prev| is_subset(sep, prev)) {
                    return Err(Error::invalid(format!(
                        "separator {} is not contained in any earlier clique",
                        k - 1
                    )));
                }
            }
            for &v in c {
                covered[v] = true;
            }
        }
        if let Some(v) = covered.iter().position(|&c| !c) {
            return Err(Error::invalid(format!("node {v} is in no clique")));
        }
        if !is_chordal(&self.completed_graph(p)).is_chordal() {
            return Err(Error::invalid("union of cliques is not chordal"));
        }
        Ok(())
    }

    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    pub fn cliques(&self) -> &[Vec<usize>] {
        &self.cliques
    }

    pub fn separators(&self) -> &[Vec<usize>] {
        &self.separators
    }

    pub fn p(&self) -> usize {
        self.ordering.len()
    }

    pub fn max_clique_width(&self) -> usize {
        self.cliques.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// True when each separator is exactly the overlap of the two cliques it
    /// sits between, as for the output of [`clique_walk`].
    pub fn is_chain(&self) -> bool {
        self.separators.iter().enumerate().all(|(k, s)| {
            let next = &self.cliques[k + 1];
            let overlap: Vec<usize> = self.cliques[k]
                .iter()
                .copied()
                .filter(|v| next.binary_search(v).is_ok())
                .collect();
            &overlap == s
        })
    }

    /// Graph whose edges are all within-clique pairs.
    pub fn completed_graph(&self, p: usize) -> UndirectedGraph {
        let mut g = UndirectedGraph::empty(p);
        for c in &self.cliques {
            for (a, &u) in c.iter().enumerate() {
                for &v in &c[a + 1..] {
                    g.add_edge(u, v).expect("validated clique members");
                }
            }
        }
        g
    }

    /// Is the pair `(i, j)` inside some clique?
    pub fn covers_pair(&self, i: usize, j: usize) -> bool {
        self.cliques
            .iter()
            .any(|c| c.binary_search(&i).is_ok() && c.binary_search(&j).is_ok())
    }
}

fn is_subset(small: &[usize], big: &[usize]) -> bool {
    small.iter().all(|v| big.binary_search(v).is_ok())
}

/// Result of [`clique_walk`].
#[derive(Debug, Clone)]
pub struct CliqueWalk {
    pub decomposition: CliqueDecomposition,
    /// The banded completion whose maximal cliques are the walk's cliques.
    pub completed: UndirectedGraph,
    /// Edges added to the input graph by the completion.
    pub fill_edges: usize,
}

/// Enumerates cliques and separators as contiguous spans of `ordering`.
///
/// The graph is first completed to its envelope under the ordering: position
/// `k` is joined to every later position up to `reach(k)`, the furthest
/// neighbor position of any node at or before `k`. The walk then starts at the
/// first position `i0`, takes `i1 = reach(i0)` (the furthest node adjacent to
/// `i0`) and emits the clique `[i0..=i1]`; the next `i0` is the earliest node
/// adjacent to `i1 + 1`, giving the separator `[i0..=i1]`. It stops once `i1`
/// reaches the last position.
pub fn clique_walk(g: &UndirectedGraph, ordering: &[usize]) -> Result<CliqueWalk> {
    let p = g.p();
    check_permutation(ordering, p)?;
    let pos = positions(ordering);

    let mut reach = vec![0usize; p];
    let mut running = 0;
    for (k, &v) in ordering.iter().enumerate() {
        let furthest = g.neighbors(v).map(|u| pos[u]).max().unwrap_or(k).max(k);
        running = running.max(furthest);
        reach[k] = running;
    }

    let mut completed = UndirectedGraph::empty(p);
    for k in 0..p {
        for l in (k + 1)..=reach[k] {
            completed.add_edge(ordering[k], ordering[l])?;
        }
    }
    let fill_edges = completed.edge_count() - g.edge_count();

    let span = |a: usize, b: usize| -> Vec<usize> { (a..=b).map(|k| ordering[k]).collect() };
    let mut cliques = Vec::new();
    let mut separators = Vec::new();
    if p > 0 {
        let mut i0 = 0;
        loop {
            let i1 = reach[i0];
            cliques.push(span(i0, i1));
            if i1 == p - 1 {
                break;
            }
            // reach is non-decreasing, so the first position reaching i1 + 1
            // is the earliest neighbor of i1 + 1 in the completion.
            let next = (i0..=i1 + 1)
                .find(|&k| reach[k] > i1)
                .expect("position i1 + 1 reaches itself");
            separators.push(if next <= i1 { span(next, i1) } else { Vec::new() });
            i0 = next;
        }
    }
    let decomposition = CliqueDecomposition::new(ordering.to_vec(), cliques, separators, p)?;
    Ok(CliqueWalk {
        decomposition,
        completed,
        fill_edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn natural(p: usize) -> Vec<usize> {
        (0..p).collect()
    }

    #[test]
    fn chain_gives_two_cliques() {
        let g = UndirectedGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let w = clique_walk(&g, &natural(3)).unwrap();
        assert_eq!(w.decomposition.cliques(), &[vec![0, 1], vec![1, 2]]);
        assert_eq!(w.decomposition.separators(), &[vec![1]]);
        assert_eq!(w.fill_edges, 0);
        assert!(w.decomposition.is_chain());
    }

    #[test]
    fn complete_graph_is_one_clique() {
        let w = clique_walk(&UndirectedGraph::complete(5), &[4, 2, 0, 1, 3]).unwrap();
        assert_eq!(w.decomposition.cliques().len(), 1);
        assert_eq!(w.decomposition.cliques()[0], vec![0, 1, 2, 3, 4]);
        assert!(w.decomposition.separators().is_empty());
    }

    #[test]
    fn band_two_on_five_nodes() {
        let g = UndirectedGraph::from_edges(
            5,
            (0..5).flat_map(|i| (i + 1..5).filter(move |&j| j - i <= 2).map(move |j| (i, j))),
        )
        .unwrap();
        let w = clique_walk(&g, &natural(5)).unwrap();
        let d = &w.decomposition;
        assert!(d.cliques().iter().all(|c| c.len() == 3));
        assert!(d.separators().iter().all(|s| s.len() == 2));
        assert_eq!(d.cliques().len(), 3);
    }

    #[test]
    fn edgeless_graph_gives_singletons() {
        let w = clique_walk(&UndirectedGraph::empty(3), &natural(3)).unwrap();
        assert_eq!(w.decomposition.cliques(), &[vec![0], vec![1], vec![2]]);
        assert!(w.decomposition.separators().iter().all(Vec::is_empty));
    }

    #[test]
    fn non_chordal_input_is_completed() {
        let cycle = UndirectedGraph::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let w = clique_walk(&cycle, &natural(4)).unwrap();
        assert!(w.fill_edges > 0);
        assert!(cycle.is_subgraph_of(&w.completed));
        assert_eq!(w.completed, w.decomposition.completed_graph(4));
        assert!(is_chordal(&w.completed).is_chordal());
    }

    #[test]
    fn invalid_decompositions_are_rejected() {
        // Separator disagrees with the overlap.
        assert!(CliqueDecomposition::new(vec![0, 1, 2], vec![vec![0, 1], vec![1, 2]], vec![vec![]], 3).is_err());
        // Node 2 missing.
        assert!(CliqueDecomposition::new(vec![0, 1, 2], vec![vec![0, 1]], vec![], 3).is_err());
        // Four cliques of a 4-cycle: union not chordal, overlaps inconsistent.
        assert!(CliqueDecomposition::new(
            vec![0, 1, 2, 3],
            vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![0, 3]],
            vec![vec![1], vec![2], vec![0, 3]],
            4
        )
        .is_err());
    }

    #[test]
    fn json_round_trip_revalidates() {
        let g = UndirectedGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let d = clique_walk(&g, &natural(3)).unwrap().decomposition;
        let s = serde_json::to_string(&d).unwrap();
        let back: CliqueDecomposition = serde_json::from_str(&s).unwrap();
        assert_eq!(d, back);
        let bad = s.replace("\"separators\":[[1]]", "\"separators\":[[0]]");
        assert!(serde_json::from_str::<CliqueDecomposition>(&bad).is_err());
    }
}
