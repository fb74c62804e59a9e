//! Undirected simple graphs with per-edge gain assignment.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::geometry::{chordal, Polyhedron};
use crate::{Error, Result};

/// An undirected edge `{a, b}` with `a < b`, tagged with the index of the
/// gain function it uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub gain: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<Edge>,
    // (neighbor, edge index), sorted by neighbor
    adjacency: Vec<Vec<(usize, usize)>>,
}

/// Named topologies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Cycle,
    Complete,
    Path,
    Star,
    /// Two complete graphs on `n/2` nodes joined by a single bridge edge.
    Barbell,
    Tetrahedral,
    Octahedral,
    Cube,
    Icosahedral,
    Dodecahedral,
}

impl GraphKind {
    pub fn polyhedron(self) -> Option<Polyhedron> {
        match self {
            GraphKind::Tetrahedral => Some(Polyhedron::Tetrahedron),
            GraphKind::Octahedral => Some(Polyhedron::Octahedron),
            GraphKind::Cube => Some(Polyhedron::Cube),
            GraphKind::Icosahedral => Some(Polyhedron::Icosahedron),
            GraphKind::Dodecahedral => Some(Polyhedron::Dodecahedron),
            _ => None,
        }
    }
}

impl Graph {
    /// Builds a graph from unordered node pairs. Self-loops, duplicates and
    /// out-of-range indices are rejected.
    pub fn from_edges(num_nodes: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut seen = BTreeSet::new();
        let mut edges = Vec::with_capacity(pairs.len());
        for &(i, j) in pairs {
            if i >= num_nodes || j >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge {{{i}, {j}}} references a node outside [0, {num_nodes})"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            let (a, b) = (i.min(j), i.max(j));
            if !seen.insert((a, b)) {
                return Err(Error::InvalidGraph(format!("duplicate edge {{{a}, {b}}}")));
            }
            edges.push(Edge { a, b, gain: 0 });
        }
        let mut adjacency = vec![Vec::new(); num_nodes];
        for (k, e) in edges.iter().enumerate() {
            adjacency[e.a].push((e.b, k));
            adjacency[e.b].push((e.a, k));
        }
        adjacency.iter_mut().for_each(|a| a.sort_unstable());
        Ok(Self {
            num_nodes,
            edges,
            adjacency,
        })
    }

    /// Standard topologies. `n` is required for the parametric families and
    /// optional (but checked) for the polyhedral graphs.
    pub fn named(kind: GraphKind, n: Option<usize>) -> Result<Self> {
        if let Some(p) = kind.polyhedron() {
            let want = p.vertex_count();
            if let Some(n) = n.filter(|&n| n != want) {
                return Err(Error::InvalidGraph(format!(
                    "{kind:?} graph has {want} nodes, not {n}"
                )));
            }
            return Ok(Self::polyhedral(p));
        }
        let n = n.ok_or_else(|| Error::InvalidGraph(format!("{kind:?} graph needs a node count")))?;
        let pairs: Vec<(usize, usize)> = match kind {
            GraphKind::Cycle => {
                if n < 3 {
                    return Err(Error::InvalidGraph("cycle needs at least 3 nodes".into()));
                }
                (0..n).map(|i| (i, (i + 1) % n)).collect()
            }
            GraphKind::Complete => (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect(),
            GraphKind::Path => (1..n).map(|i| (i - 1, i)).collect(),
            GraphKind::Star => (1..n).map(|i| (0, i)).collect(),
            GraphKind::Barbell => {
                if n < 4 || n % 2 != 0 {
                    return Err(Error::InvalidGraph(
                        "barbell needs an even node count of at least 4".into(),
                    ));
                }
                let h = n / 2;
                let clique = |off: usize| {
                    (0..h).flat_map(move |i| (i + 1..h).map(move |j| (off + i, off + j)))
                };
                clique(0).chain(clique(h)).chain([(h - 1, h)]).collect()
            }
            _ => unreachable!("polyhedral kinds handled above"),
        };
        Self::from_edges(n, &pairs)
    }

    /// Skeleton graph of a regular polyhedron, in the vertex order of
    /// [`Polyhedron::vertices`].
    pub fn polyhedral(p: Polyhedron) -> Self {
        let v = p.vertices();
        let mut min_s = f64::INFINITY;
        for (i, a) in v.iter().enumerate() {
            for b in &v[i + 1..] {
                min_s = min_s.min(chordal(a, b));
            }
        }
        let mut pairs = Vec::new();
        for (i, a) in v.iter().enumerate() {
            for (j, b) in v.iter().enumerate().skip(i + 1) {
                if chordal(a, b) < min_s + 1e-9 {
                    pairs.push((i, j));
                }
            }
        }
        Self::from_edges(v.len(), &pairs).expect("polyhedron skeleton is a simple graph")
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `i` as `(j, edge index)` pairs.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.adjacency
            .get(i)?
            .binary_search_by_key(&j, |&(n, _)| n)
            .ok()
            .map(|p| self.adjacency[i][p].1)
    }

    /// Assigns gain index `gain` to edge `{i, j}`.
    pub fn set_edge_gain(&mut self, i: usize, j: usize, gain: usize) -> Result<()> {
        let k = self
            .edge_index(i, j)
            .ok_or_else(|| Error::InvalidGraph(format!("no edge {{{i}, {j}}}")))?;
        self.edges[k].gain = gain;
        Ok(())
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.num_nodes];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &(j, _) in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.num_nodes
    }

    /// True if every node has degree two and the graph is connected.
    pub fn is_cycle(&self) -> bool {
        self.num_nodes >= 3 && (0..self.num_nodes).all(|i| self.degree(i) == 2) && self.is_connected()
    }
}
