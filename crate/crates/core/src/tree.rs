//! Labeled trees on the node set `{0, …, d−1}`.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 0-based node index.
pub type NodeId = usize;

/// Undirected tree on `d` labeled nodes.
///
/// Edges are stored normalized (`u < v`) and sorted lexicographically, which
/// makes equality of trees plain equality of edge lists.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TreeDocument", into = "TreeDocument")]
pub struct LabeledTree {
    d: usize,
    edges: Vec<(NodeId, NodeId)>,
    adjacency: Vec<Vec<NodeId>>,
}

/// Wire form of a tree: `{"d": int, "edges": [[u, v], …], "names": [..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub d: usize,
    pub edges: Vec<[NodeId; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

impl TryFrom<TreeDocument> for LabeledTree {
    type Error = Error;

    fn try_from(doc: TreeDocument) -> Result<Self> {
        let edges: Vec<_> = doc.edges.iter().map(|e| (e[0], e[1])).collect();
        LabeledTree::new(doc.d, &edges)
    }
}

impl From<LabeledTree> for TreeDocument {
    fn from(t: LabeledTree) -> Self {
        TreeDocument {
            d: t.d,
            edges: t.edges.iter().map(|&(u, v)| [u, v]).collect(),
            names: None,
        }
    }
}

/// Tree together with optional variable names (bijective with node indices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTree {
    #[serde(flatten)]
    pub tree: LabeledTree,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

impl NamedTree {
    pub fn new(tree: LabeledTree, names: Option<Vec<String>>) -> Result<Self> {
        if let Some(names) = &names {
            check_names(names, tree.d())?;
        }
        Ok(Self { tree, names })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let named: NamedTree = serde_json::from_str(s)?;
        if let Some(names) = &named.names {
            check_names(names, named.tree.d())?;
        }
        Ok(named)
    }
}

pub(crate) fn check_names(names: &[String], d: usize) -> Result<()> {
    if names.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: names.len() });
    }
    let mut sorted: Vec<&String> = names.iter().collect();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter("variable names must be distinct".into()));
    }
    Ok(())
}

/// Normalize an unordered pair to `(min, max)`.
#[inline]
pub fn edge_key(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// The procedure used by [`random_tree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeSampling {
    /// Add uniformly chosen cycle-free pairs one at a time until `d − 1`
    /// edges are placed. Not uniform over labeled trees.
    #[default]
    SequentialEdges,
    /// Uniform over all `d^(d−2)` labeled trees via a random Prüfer sequence.
    UniformSpanning,
}

/// Breadth-first orientation of a tree away from a root.
#[derive(Debug, Clone)]
pub struct RootedTree {
    pub root: NodeId,
    /// Nodes in BFS order, starting with the root.
    pub order: Vec<NodeId>,
    /// `parent[v]`, `None` for the root.
    pub parent: Vec<Option<NodeId>>,
}

impl LabeledTree {
    /// Validates and builds a tree. `d = 1` with no edges is accepted as the
    /// single-node tree.
    pub fn new(d: usize, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimension(d));
        }
        if edges.len() != d - 1 {
            return Err(Error::WrongEdgeCount { d, expected: d - 1, got: edges.len() });
        }
        let mut normalized = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            for node in [u, v] {
                if node >= d {
                    return Err(Error::NodeOutOfRange { node, d });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            normalized.push(edge_key(u, v));
        }
        normalized.sort_unstable();
        if let Some(w) = normalized.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateEdge(w[0].0, w[0].1));
        }
        let mut adjacency = vec![Vec::new(); d];
        for &(u, v) in &normalized {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        let tree = Self { d, edges: normalized, adjacency };
        if tree.rooted(0).order.len() != d {
            return Err(Error::Disconnected);
        }
        Ok(tree)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Normalized, lexicographically sorted edges.
    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.adjacency[v]
    }

    pub fn contains_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.edges.binary_search(&edge_key(u, v)).is_ok()
    }

    /// Number of edges shared with `other` (as unordered pairs).
    pub fn shared_edges(&self, other: &LabeledTree) -> usize {
        self.edges.iter().filter(|&&(u, v)| other.contains_edge(u, v)).count()
    }

    pub fn rooted(&self, root: NodeId) -> RootedTree {
        let mut parent = vec![None; self.d];
        let mut seen = vec![false; self.d];
        let mut order = Vec::with_capacity(self.d);
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some(v);
                    queue.push_back(w);
                }
            }
        }
        RootedTree { root, order, parent }
    }

    /// The unique simple path from `i` to `j` as directed edges pointing
    /// away from `i`. Empty iff `i == j`.
    pub fn path_edges(&self, i: NodeId, j: NodeId) -> Vec<(NodeId, NodeId)> {
        assert!(i < self.d && j < self.d, "node out of range");
        let rooted = self.rooted(i);
        let mut path = Vec::new();
        let mut v = j;
        while let Some(p) = rooted.parent[v] {
            path.push((p, v));
            v = p;
        }
        path.reverse();
        path
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Decodes a Prüfer sequence of length `d − 2` into a labeled tree.
    pub fn from_prufer(d: usize, seq: &[NodeId]) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidDimension(d));
        }
        if seq.len() != d - 2 {
            return Err(Error::InvalidParameter(format!(
                "Prüfer sequence for d = {d} must have length {}",
                d - 2
            )));
        }
        if let Some(&node) = seq.iter().find(|&&s| s >= d) {
            return Err(Error::NodeOutOfRange { node, d });
        }
        let mut degree = vec![1usize; d];
        for &s in seq {
            degree[s] += 1;
        }
        let mut edges = Vec::with_capacity(d - 1);
        for &s in seq {
            let leaf = (0..d).find(|&v| degree[v] == 1).expect("a leaf always exists");
            edges.push((leaf, s));
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<NodeId> = (0..d).filter(|&v| degree[v] == 1).collect();
        edges.push((rest[0], rest[1]));
        Self::new(d, &edges)
    }
}

/// Checks the tree invariants on a raw edge list.
pub fn validate_tree(d: usize, edges: &[(NodeId, NodeId)]) -> Result<LabeledTree> {
    LabeledTree::new(d, edges)
}

/// Equality of edge sets; errors when the dimensions differ.
pub fn tree_equal(a: &LabeledTree, b: &LabeledTree) -> Result<bool> {
    if a.d != b.d {
        return Err(Error::DimensionMismatch { expected: a.d, got: b.d });
    }
    Ok(a.edges == b.edges)
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        self.parent[ra] = rb;
    }
}

/// Draws a random labeled tree on `d ≥ 2` nodes.
pub fn random_tree<R: Rng + ?Sized>(d: usize, mode: TreeSampling, rng: &mut R) -> Result<LabeledTree> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    match mode {
        TreeSampling::SequentialEdges => {
            let mut sets = DisjointSets::new(d);
            let mut edges = Vec::with_capacity(d - 1);
            let mut candidates = Vec::with_capacity(d * (d - 1) / 2);
            while edges.len() < d - 1 {
                candidates.clear();
                for u in 0..d {
                    for v in u + 1..d {
                        if sets.find(u) != sets.find(v) {
                            candidates.push((u, v));
                        }
                    }
                }
                let (u, v) = candidates[rng.random_range(0..candidates.len())];
                sets.union(u, v);
                edges.push((u, v));
            }
            LabeledTree::new(d, &edges)
        }
        TreeSampling::UniformSpanning => {
            let seq: Vec<NodeId> = (0..d.saturating_sub(2)).map(|_| rng.random_range(0..d)).collect();
            LabeledTree::from_prufer(d, &seq)
        }
    }
}

/// Iterator over all `d^(d−2)` labeled trees on `d ≥ 2` nodes, in Prüfer
/// sequence order.
pub struct AllTrees {
    d: usize,
    seq: Vec<NodeId>,
    done: bool,
}

pub fn all_labeled_trees(d: usize) -> Result<AllTrees> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    Ok(AllTrees { d, seq: vec![0; d - 2], done: false })
}

impl Iterator for AllTrees {
    type Item = LabeledTree;

    fn next(&mut self) -> Option<LabeledTree> {
        if self.done {
            return None;
        }
        let tree = LabeledTree::from_prufer(self.d, &self.seq).expect("valid Prüfer sequence");
        // odometer increment
        let mut pos = self.seq.len();
        loop {
            if pos == 0 {
                self.done = true;
                break;
            }
            pos -= 1;
            self.seq[pos] += 1;
            if self.seq[pos] < self.d {
                break;
            }
            self.seq[pos] = 0;
        }
        Some(tree)
    }
}
