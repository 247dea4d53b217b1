//! Undirected graphs for Markov structures, plus the chordal machinery the
//! decomposable estimator relies on.

mod chordal;
mod decomposition;
mod metrics;
mod rcm;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use chordal::{chordal_decomposition, is_chordal, maximal_cliques, Chordality};
pub use decomposition::{clique_walk, CliqueDecomposition, CliqueWalk};
pub use metrics::{metrics, GraphMetrics, MAX_ENUMERATION_NODES};
pub use rcm::{pseudo_peripheral_node, rcm_ordering, RcmOrdering};

/// Simple undirected graph on nodes `0..p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    adj: Vec<BTreeSet<usize>>,
    labels: Option<Vec<String>>,
}

/// Serialized form: `{p, labels, edges}` with `i < j` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphRecord {
    pub p: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub edges: Vec<(usize, usize)>,
}

impl UndirectedGraph {
    pub fn empty(p: usize) -> Self {
        Self {
            adj: vec![BTreeSet::new(); p],
            labels: None,
        }
    }

    pub fn complete(p: usize) -> Self {
        let adj = (0..p)
            .map(|i| (0..p).filter(|&j| j != i).collect())
            .collect();
        Self { adj, labels: None }
    }

    /// Builds a graph from node pairs. Repeated pairs collapse to one edge;
    /// self-loops and out-of-range nodes are errors.
    pub fn from_edges(p: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Self::empty(p);
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.p() {
            return Err(Error::invalid(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.p()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn p(&self) -> usize {
        self.adj.len()
    }

    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<bool> {
        let p = self.p();
        if i >= p || j >= p {
            return Err(Error::invalid(format!("edge ({i}, {j}) outside 0..{p}")));
        }
        if i == j {
            return Err(Error::invalid(format!("self-loop at node {i}")));
        }
        let added = self.adj[i].insert(j);
        self.adj[j].insert(i);
        Ok(added)
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) -> bool {
        if i >= self.p() || j >= self.p() {
            return false;
        }
        self.adj[j].remove(&i);
        self.adj[i].remove(&j)
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj.get(i).is_some_and(|a| a.contains(&j))
    }

    /// Neighbors in increasing index order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adj[i].iter().copied()
    }

    pub fn neighbor_set(&self, i: usize) -> &BTreeSet<usize> {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Edges as `(i, j)` with `i < j`, lexicographically sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(i, a)| a.range(i + 1..).map(move |&j| (i, j)))
            .collect()
    }

    /// Node `i` becomes node `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.p())?;
        let mut g = Self::empty(self.p());
        for (i, j) in self.edges() {
            g.add_edge(perm[i], perm[j])?;
        }
        Ok(g)
    }

    /// Is every pair in `nodes` adjacent?
    pub fn is_clique(&self, nodes: &[usize]) -> bool {
        nodes
            .iter()
            .enumerate()
            .all(|(a, &u)| nodes[a + 1..].iter().all(|&v| self.has_edge(u, v)))
    }

    /// Is `sub` a subgraph of `self` (same node count, edge subset)?
    pub fn is_subgraph_of(&self, other: &Self) -> bool {
        self.p() == other.p() && self.edges().iter().all(|&(i, j)| other.has_edge(i, j))
    }

    pub fn to_record(&self) -> GraphRecord {
        GraphRecord {
            p: self.p(),
            labels: self.labels.clone(),
            edges: self.edges(),
        }
    }

    pub fn from_record(rec: &GraphRecord) -> Result<Self> {
        let g = Self::from_edges(rec.p, rec.edges.iter().copied())?;
        match &rec.labels {
            Some(l) => g.with_labels(l.clone()),
            None => Ok(g),
        }
    }

    /// Connected components, each sorted, ordered by their smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let p = self.p();
        let mut seen = vec![false; p];
        let mut out = Vec::new();
        for start in 0..p {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                for v in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

pub(crate) fn check_permutation(perm: &[usize], p: usize) -> Result<()> {
    if perm.len() != p {
        return Err(Error::invalid(format!(
            "ordering has {} entries for {p} nodes",
            perm.len()
        )));
    }
    let mut seen = vec![false; p];
    for &v in perm {
        if v >= p || std::mem::replace(&mut seen[v], true) {
            return Err(Error::invalid(format!("ordering is not a permutation of 0..{p}")));
        }
    }
    Ok(())
}

/// `position[v]` for an ordering listing nodes first to last.
pub(crate) fn positions(ordering: &[usize]) -> Vec<usize> {
    let mut pos = vec![0; ordering.len()];
    for (k, &v) in ordering.iter().enumerate() {
        pos[v] = k;
    }
    pos
}

/// Largest `|position(i) - position(j)|` over edges; 0 without edges.
pub fn bandwidth(g: &UndirectedGraph, ordering: &[usize]) -> Result<usize> {
    check_permutation(ordering, g.p())?;
    let pos = positions(ordering);
    Ok(g.edges()
        .into_iter()
        .map(|(i, j)| pos[i].abs_diff(pos[j]))
        .max()
        .unwrap_or(0))
}
