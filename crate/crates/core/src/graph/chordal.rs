use std::collections::{BTreeSet, VecDeque};

use super::{CliqueDecomposition, UndirectedGraph};
use crate::{Error, Result};

/// Outcome of [`is_chordal`], carrying a certificate either way.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Chordality {
    /// Nodes in an order where each node's later neighbors form a clique.
    Chordal { elimination_order: Vec<usize> },
    /// An induced cycle of length at least four.
    NotChordal { cycle: Vec<usize> },
}

impl Chordality {
    pub fn is_chordal(&self) -> bool {
        matches!(self, Chordality::Chordal { .. })
    }
}

/// Maximum cardinality search. Returns nodes in visit order, ties broken by
/// lowest index.
fn maximum_cardinality_search(g: &UndirectedGraph) -> (Vec<usize>, Vec<usize>) {
    let p = g.p();
    let mut weight = vec![0usize; p];
    let mut visited = vec![false; p];
    let mut order = Vec::with_capacity(p);
    let mut labels = Vec::with_capacity(p);
    for _ in 0..p {
        let v = (0..p)
            .filter(|&v| !visited[v])
            .max_by(|&a, &b| weight[a].cmp(&weight[b]).then(b.cmp(&a)))
            .expect("unvisited node remains");
        visited[v] = true;
        order.push(v);
        labels.push(weight[v]);
        for u in g.neighbors(v) {
            if !visited[u] {
                weight[u] += 1;
            }
        }
    }
    (order, labels)
}

/// Chordality test by maximum cardinality search and perfect elimination
/// verification. Non-chordal graphs yield a chordless cycle.
pub fn is_chordal(g: &UndirectedGraph) -> Chordality {
    let (visit, _) = maximum_cardinality_search(g);
    let elimination: Vec<usize> = visit.into_iter().rev().collect();
    let pos = super::positions(&elimination);

    let mut chordal = true;
    for &v in &elimination {
        let later: Vec<usize> = g.neighbors(v).filter(|&u| pos[u] > pos[v]).collect();
        for (a, &u) in later.iter().enumerate() {
            for &w in &later[a + 1..] {
                if g.has_edge(u, w) {
                    continue;
                }
                chordal = false;
                if let Some(cycle) = chordless_cycle_through(g, v, u, w) {
                    return Chordality::NotChordal { cycle };
                }
            }
        }
    }
    // An induced cycle is always found from its earliest-eliminated node.
    assert!(chordal, "failed elimination check without an induced cycle");
    Chordality::Chordal {
        elimination_order: elimination,
    }
}

/// Shortest `u`–`w` path avoiding `v` and the rest of `v`'s neighborhood,
/// closed through `v`. Shortest paths have no chords, and no interior node
/// touches `v`.
fn chordless_cycle_through(g: &UndirectedGraph, v: usize, u: usize, w: usize) -> Option<Vec<usize>> {
    let p = g.p();
    let mut blocked = vec![false; p];
    blocked[v] = true;
    for x in g.neighbors(v) {
        blocked[x] = x != u && x != w;
    }
    let mut parent = vec![usize::MAX; p];
    parent[u] = u;
    let mut queue = VecDeque::from([u]);
    while let Some(x) = queue.pop_front() {
        if x == w {
            break;
        }
        for y in g.neighbors(x) {
            if !blocked[y] && parent[y] == usize::MAX {
                parent[y] = x;
                queue.push_back(y);
            }
        }
    }
    if parent[w] == usize::MAX {
        return None;
    }
    let mut path = vec![w];
    let mut x = w;
    while x != u {
        x = parent[x];
        path.push(x);
    }
    path.push(v);
    path.reverse();
    // [v, u, ..., w]
    Some(path)
}

/// Perfect sequence of maximal cliques for a chordal graph, read off a
/// maximum cardinality search: a new clique starts whenever the visit label
/// fails to increase. Separator `k` is the intersection of clique `k + 1`
/// with everything before it, which is contained in one earlier clique.
pub fn chordal_decomposition(g: &UndirectedGraph) -> Result<CliqueDecomposition> {
    if !is_chordal(g).is_chordal() {
        return Err(Error::invalid("graph is not chordal"));
    }
    let (visit, labels) = maximum_cardinality_search(g);
    let mut seen = vec![false; g.p()];
    let mut cliques: Vec<Vec<usize>> = Vec::new();
    let mut separators = Vec::new();
    for (k, &v) in visit.iter().enumerate() {
        let earlier: Vec<usize> = g.neighbors(v).filter(|&u| seen[u]).collect();
        if k == 0 || labels[k] <= labels[k - 1] {
            if k > 0 {
                separators.push(earlier.clone());
            }
            let mut c = earlier;
            c.push(v);
            c.sort_unstable();
            cliques.push(c);
        } else {
            let last = cliques.last_mut().expect("first node opens a clique");
            last.push(v);
            last.sort_unstable();
        }
        seen[v] = true;
    }
    CliqueDecomposition::new(visit, cliques, separators, g.p())
}

/// All maximal cliques (Bron–Kerbosch with pivoting), each sorted, listed in
/// lexicographic order.
pub fn maximal_cliques(g: &UndirectedGraph) -> Vec<Vec<usize>> {
    fn expand(
        g: &UndirectedGraph,
        r: &mut Vec<usize>,
        mut cand: BTreeSet<usize>,
        mut excl: BTreeSet<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cand.is_empty() {
            if excl.is_empty() {
                let mut c = r.clone();
                c.sort_unstable();
                out.push(c);
            }
            return;
        }
        let pivot = cand
            .iter()
            .chain(excl.iter())
            .copied()
            .max_by_key(|&u| cand.intersection(g.neighbor_set(u)).count())
            .expect("candidates non-empty");
        let todo: Vec<usize> = cand.difference(g.neighbor_set(pivot)).copied().collect();
        for v in todo {
            let nb = g.neighbor_set(v);
            r.push(v);
            expand(
                g,
                r,
                cand.intersection(nb).copied().collect(),
                excl.intersection(nb).copied().collect(),
                out,
            );
            r.pop();
            cand.remove(&v);
            excl.insert(v);
        }
    }
    let mut out = Vec::new();
    expand(g, &mut Vec::new(), (0..g.p()).collect(), BTreeSet::new(), &mut out);
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(p: usize, e: &[(usize, usize)]) -> UndirectedGraph {
        UndirectedGraph::from_edges(p, e.iter().copied()).unwrap()
    }

    #[test]
    fn triangle_is_chordal() {
        let r = is_chordal(&graph(3, &[(0, 1), (1, 2), (0, 2)]));
        assert!(r.is_chordal());
    }

    #[test]
    fn square_is_not_and_certificate_is_the_cycle() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        match is_chordal(&g) {
            Chordality::NotChordal { cycle } => {
                let mut sorted = cycle.clone();
                sorted.sort_unstable();
                assert_eq!(sorted, vec![0, 1, 2, 3]);
                assert!(fastdecomp_testkit::is_chordless_cycle(4, &g.edges(), &cycle));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn square_with_chord_is_chordal() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]);
        match is_chordal(&g) {
            Chordality::Chordal { elimination_order } => {
                let pos = crate::graph::positions(&elimination_order);
                for v in 0..4 {
                    let later: Vec<usize> = g.neighbors(v).filter(|&u| pos[u] > pos[v]).collect();
                    assert!(g.is_clique(&later));
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn long_cycle_certificate_is_chordless() {
        let mut e: Vec<(usize, usize)> = (0..7).map(|i| (i, (i + 1) % 7)).collect();
        e.push((0, 2));
        e.push((8, 0));
        let g = graph(9, &e);
        match is_chordal(&g) {
            Chordality::NotChordal { cycle } => {
                assert!(fastdecomp_testkit::is_chordless_cycle(9, &g.edges(), &cycle))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn decomposition_of_a_tree_uses_parent_separators() {
        // Star with an extra leaf chain: cliques are the edges.
        let g = graph(5, &[(0, 1), (0, 2), (0, 3), (3, 4)]);
        let d = chordal_decomposition(&g).unwrap();
        assert_eq!(d.cliques().len(), 4);
        assert!(d.separators().iter().all(|s| s.len() == 1));
        d.validate(5).unwrap();
    }

    #[test]
    fn maximal_cliques_of_two_triangles() {
        let g = graph(5, &[(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (2, 4)]);
        assert_eq!(maximal_cliques(&g), vec![vec![0, 1, 2], vec![2, 3, 4]]);
        assert_eq!(maximal_cliques(&UndirectedGraph::empty(2)), vec![vec![0], vec![1]]);
    }
}
