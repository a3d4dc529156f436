//! Finite simple graphs with the combinatorics needed for second-order
//! Markov random fields: first and second boundaries, bounded-diameter
//! cliques, the square graph, balls around a root and the augmented
//! truncation `G_n` whose outer annulus is completed into a clique.
//!
//! Vertices are addressed by dense indices `0..len()`; every vertex also
//! carries an opaque, unique text label used for I/O.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

pub mod generators;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("vertex index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("duplicate vertex label `{0}`")]
    DuplicateVertex(String),
    #[error("self-edge at vertex `{0}`")]
    SelfEdge(String),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(String, String),
    #[error("graph has no root")]
    NoRoot,
    #[error("truncation level must be at least 4, got {0}")]
    TruncationTooShallow(usize),
    #[error("clique order must be 1 or 2, got {0}")]
    BadCliqueOrder(usize),
    #[error("vertex sets are not pairwise disjoint")]
    NotDisjoint,
    #[error("edge list line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// A set of vertex indices of some graph, ordered by index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct VertexSet(BTreeSet<usize>);

impl VertexSet {
    pub fn new() -> Self {
        Self(BTreeSet::new())
    }

    pub fn singleton(v: usize) -> Self {
        Self(BTreeSet::from([v]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.0.contains(&v)
    }

    pub fn insert(&mut self, v: usize) -> bool {
        self.0.insert(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.0.iter().copied().collect()
    }

    pub fn union(&self, other: &VertexSet) -> VertexSet {
        Self(self.0.union(&other.0).copied().collect())
    }

    pub fn difference(&self, other: &VertexSet) -> VertexSet {
        Self(self.0.difference(&other.0).copied().collect())
    }

    pub fn intersection(&self, other: &VertexSet) -> VertexSet {
        Self(self.0.intersection(&other.0).copied().collect())
    }

    pub fn is_subset(&self, other: &VertexSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn is_disjoint(&self, other: &VertexSet) -> bool {
        self.0.is_disjoint(&other.0)
    }

    pub fn max(&self) -> Option<usize> {
        self.0.iter().next_back().copied()
    }
}

impl FromIterator<usize> for VertexSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl<const N: usize> From<[usize; N]> for VertexSet {
    fn from(v: [usize; N]) -> Self {
        v.into_iter().collect()
    }
}

impl From<Vec<usize>> for VertexSet {
    fn from(v: Vec<usize>) -> Self {
        v.into_iter().collect()
    }
}

/// Orders sets by size, then lexicographically by sorted members.
fn size_lex_cmp(a: &VertexSet, b: &VertexSet) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| a.0.iter().cmp(b.0.iter()))
}

/// Finite simple undirected graph, optionally rooted. Immutable once built.
#[derive(Debug, Clone)]
pub struct Graph {
    labels: Vec<String>,
    index: HashMap<String, usize>,
    adj: Vec<Vec<usize>>,
    root: Option<usize>,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels && self.adj == other.adj && self.root == other.root
    }
}

impl Eq for Graph {}

impl Graph {
    /// Builds a graph from labels and index pairs. Rejects self-edges,
    /// repeated edges and repeated labels.
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>, edges: &[(usize, usize)]) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(GraphError::DuplicateVertex(l.clone()));
            }
        }
        let n = labels.len();
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n {
                return Err(GraphError::IndexOutOfRange(u));
            }
            if v >= n {
                return Err(GraphError::IndexOutOfRange(v));
            }
            if u == v {
                return Err(GraphError::SelfEdge(labels[u].clone()));
            }
            if adj[u].contains(&v) {
                return Err(GraphError::DuplicateEdge(labels[u].clone(), labels[v].clone()));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(Self { labels, index, adj, root: None })
    }

    /// Builds a graph from labelled edges; vertices are ordered by first
    /// appearance.
    pub fn from_labeled_edges(edges: &[(&str, &str)]) -> Result<Self> {
        let mut labels: Vec<String> = Vec::new();
        let mut seen: HashMap<&str, usize> = HashMap::new();
        let mut idx_edges = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            let mut id = |s| {
                *seen.entry(s).or_insert_with(|| {
                    labels.push(s.to_string());
                    labels.len() - 1
                })
            };
            let a = id(u);
            let b = id(v);
            idx_edges.push((a, b));
        }
        Self::new(labels, &idx_edges)
    }

    pub fn with_root(mut self, label: &str) -> Result<Self> {
        self.root = Some(self.vertex(label)?);
        Ok(self)
    }

    pub fn with_root_index(mut self, v: usize) -> Result<Self> {
        self.check(v)?;
        self.root = Some(v);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn root(&self) -> Option<usize> {
        self.root
    }

    /// Index of the vertex with the given label.
    pub fn vertex(&self, label: &str) -> Result<usize> {
        self.index.get(label).copied().ok_or_else(|| GraphError::UnknownVertex(label.to_string()))
    }

    pub fn vertex_set(&self, labels: &[&str]) -> Result<VertexSet> {
        labels.iter().map(|l| self.vertex(l)).collect()
    }

    pub fn labels_of(&self, set: &VertexSet) -> Vec<&str> {
        set.iter().map(|v| self.label(v)).collect()
    }

    pub fn all_vertices(&self) -> VertexSet {
        (0..self.len()).collect()
    }

    fn check(&self, v: usize) -> Result<()> {
        if v < self.len() {
            Ok(())
        } else {
            Err(GraphError::IndexOutOfRange(v))
        }
    }

    fn check_set(&self, a: &VertexSet) -> Result<()> {
        match a.max() {
            Some(m) => self.check(m),
            None => Ok(()),
        }
    }

    /// Neighbors of `v` as a sorted slice.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn neighbor_set(&self, v: usize) -> Result<VertexSet> {
        self.check(v)?;
        Ok(self.adj[v].iter().copied().collect())
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Edges as index pairs `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (u, list) in self.adj.iter().enumerate() {
            for &v in list {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// First boundary: vertices outside `a` adjacent to some member of `a`.
    pub fn boundary(&self, a: &VertexSet) -> Result<VertexSet> {
        self.check_set(a)?;
        Ok(a.iter().flat_map(|v| self.adj[v].iter().copied()).filter(|u| !a.contains(*u)).collect())
    }

    /// Second boundary `∂A ∪ ∂(A ∪ ∂A)`.
    pub fn boundary2(&self, a: &VertexSet) -> Result<VertexSet> {
        let first = self.boundary(a)?;
        let closure = a.union(&first);
        let second = self.boundary(&closure)?;
        Ok(first.union(&second))
    }

    /// `∂A` for order 1 and `∂²A` for order 2.
    pub fn boundary_of_order(&self, a: &VertexSet, order: usize) -> Result<VertexSet> {
        match order {
            1 => self.boundary(a),
            2 => self.boundary2(a),
            k => Err(GraphError::BadCliqueOrder(k)),
        }
    }

    /// BFS distances from `v`; `None` marks unreachable vertices.
    pub fn distances_from(&self, v: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        let mut queue = VecDeque::new();
        dist[v] = Some(0);
        queue.push_back(v);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &w in &self.adj[u] {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Graph distance; `None` when `u` and `v` lie in different components.
    pub fn distance(&self, u: usize, v: usize) -> Result<Option<usize>> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.distances_from(u)[v])
    }

    pub fn distance_matrix(&self) -> Vec<Vec<Option<usize>>> {
        (0..self.len()).map(|v| self.distances_from(v)).collect()
    }

    /// `sup{d(u,v) : u,v ∈ a}`; `None` if some pair is disconnected.
    /// The empty set has diameter `Some(0)` here, though it is never a clique.
    pub fn diameter(&self, a: &VertexSet) -> Result<Option<usize>> {
        self.check_set(a)?;
        let mut diam = 0;
        for u in a.iter() {
            let d = self.distances_from(u);
            for v in a.iter() {
                match d[v] {
                    Some(x) => diam = diam.max(x),
                    None => return Ok(None),
                }
            }
        }
        Ok(Some(diam))
    }

    pub fn is_connected(&self) -> bool {
        self.is_empty() || self.distances_from(0).iter().all(Option::is_some)
    }

    /// Pairs at distance at most `order`, as adjacency lists (excluding self).
    fn within_distance(&self, order: usize) -> Vec<Vec<usize>> {
        (0..self.len())
            .map(|v| {
                self.distances_from(v)
                    .iter()
                    .enumerate()
                    .filter(|&(u, d)| u != v && matches!(d, Some(x) if *x <= order))
                    .map(|(u, _)| u)
                    .collect()
            })
            .collect()
    }

    /// All nonempty vertex sets of diameter at most `order`, sorted by size
    /// and then lexicographically.
    pub fn cliques(&self, order: usize) -> Result<Vec<VertexSet>> {
        if order != 1 && order != 2 {
            return Err(GraphError::BadCliqueOrder(order));
        }
        let close = self.within_distance(order);
        let compat: Vec<BTreeSet<usize>> = close.into_iter().map(|l| l.into_iter().collect()).collect();
        let mut out = Vec::new();
        let mut current = Vec::new();
        fn extend(
            start: usize,
            n: usize,
            compat: &[BTreeSet<usize>],
            current: &mut Vec<usize>,
            out: &mut Vec<VertexSet>,
        ) {
            for v in start..n {
                if current.iter().all(|&u| compat[u].contains(&v)) {
                    current.push(v);
                    out.push(current.iter().copied().collect());
                    extend(v + 1, n, compat, current, out);
                    current.pop();
                }
            }
        }
        extend(0, self.len(), &compat, &mut current, &mut out);
        out.sort_by(size_lex_cmp);
        Ok(out)
    }

    /// Whether `a` is a nonempty set of diameter at most `order`.
    pub fn is_clique(&self, a: &VertexSet, order: usize) -> Result<bool> {
        if a.is_empty() {
            return Ok(false);
        }
        Ok(matches!(self.diameter(a)?, Some(d) if d <= order))
    }

    /// Same vertices; `u ~ v` iff `1 <= d(u,v) <= 2`.
    pub fn square_graph(&self) -> Graph {
        let close = self.within_distance(2);
        let mut edges = Vec::new();
        for (u, list) in close.iter().enumerate() {
            for &v in list {
                if u < v {
                    edges.push((u, v));
                }
            }
        }
        let mut g = Graph::new(self.labels.clone(), &edges).expect("square graph is simple");
        g.root = self.root;
        g
    }

    /// Induced subgraph on `a`, keeping labels (in index order) and the root if
    /// it belongs to `a`.
    pub fn induced_subgraph(&self, a: &VertexSet) -> Result<Graph> {
        self.check_set(a)?;
        let members = a.to_vec();
        let pos: HashMap<usize, usize> = members.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut edges = Vec::new();
        for (i, &u) in members.iter().enumerate() {
            for &w in &self.adj[u] {
                if let Some(&j) = pos.get(&w) {
                    if i < j {
                        edges.push((i, j));
                    }
                }
            }
        }
        let labels: Vec<String> = members.iter().map(|&v| self.labels[v].clone()).collect();
        let mut g = Graph::new(labels, &edges)?;
        g.root = self.root.and_then(|r| pos.get(&r).copied());
        Ok(g)
    }

    /// `V_n = {v : d(v, root) <= n}`.
    pub fn ball(&self, n: usize) -> Result<VertexSet> {
        let root = self.root.ok_or(GraphError::NoRoot)?;
        Ok(self
            .distances_from(root)
            .iter()
            .enumerate()
            .filter(|(_, d)| matches!(d, Some(x) if *x <= n))
            .map(|(v, _)| v)
            .collect())
    }

    /// The annulus `U_n = V_n \ V_{n-2}` (requires `n >= 2`).
    pub fn annulus(&self, n: usize) -> Result<VertexSet> {
        let outer = self.ball(n)?;
        let inner = self.ball(n.saturating_sub(2))?;
        Ok(if n < 2 { outer } else { outer.difference(&inner) })
    }

    /// The graph `G_n` on `V_n`: induced edges plus every pair inside the
    /// annulus `U_n`. The root is retained.
    pub fn augmented_truncation(&self, n: usize) -> Result<Graph> {
        if n < 4 {
            return Err(GraphError::TruncationTooShallow(n));
        }
        let vn = self.ball(n)?;
        let un = self.annulus(n)?;
        let members = vn.to_vec();
        let pos: HashMap<usize, usize> = members.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut edges = BTreeSet::new();
        for (i, &u) in members.iter().enumerate() {
            for &w in &self.adj[u] {
                if let Some(&j) = pos.get(&w) {
                    if i < j {
                        edges.insert((i, j));
                    }
                }
            }
        }
        let annulus: Vec<usize> = un.iter().map(|v| pos[&v]).collect();
        for (x, &i) in annulus.iter().enumerate() {
            for &j in &annulus[x + 1..] {
                edges.insert((i.min(j), i.max(j)));
            }
        }
        let labels: Vec<String> = members.iter().map(|&v| self.labels[v].clone()).collect();
        let edges: Vec<(usize, usize)> = edges.into_iter().collect();
        let mut g = Graph::new(labels, &edges)?;
        g.root = self.root.map(|r| pos[&r]);
        Ok(g)
    }

    fn check_disjoint(&self, sets: [&VertexSet; 3]) -> Result<()> {
        for s in sets {
            self.check_set(s)?;
        }
        if !sets[0].is_disjoint(sets[1]) || !sets[0].is_disjoint(sets[2]) || !sets[1].is_disjoint(sets[2]) {
            return Err(GraphError::NotDisjoint);
        }
        Ok(())
    }

    /// Whether every path from `a` to `b` passes through two consecutive
    /// vertices of `s`. Decided as separation of `a` from `b` by `s` in the
    /// square graph.
    pub fn is_2cutset(&self, a: &VertexSet, b: &VertexSet, s: &VertexSet) -> Result<bool> {
        self.check_disjoint([a, b, s])?;
        let sq = self.square_graph();
        let mut seen = vec![false; self.len()];
        let mut queue: VecDeque<usize> = a.iter().collect();
        for v in a.iter() {
            seen[v] = true;
        }
        while let Some(u) = queue.pop_front() {
            if b.contains(u) {
                return Ok(false);
            }
            for &w in sq.neighbors(u) {
                if !seen[w] && !s.contains(w) {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        Ok(true)
    }

    /// Reference for [`Graph::is_2cutset`]: exhaustive enumeration of simple
    /// paths from `a`, abandoning a path as soon as it steps between two
    /// vertices of `s`. Exponential; intended for small graphs.
    pub fn is_2cutset_by_paths(&self, a: &VertexSet, b: &VertexSet, s: &VertexSet) -> Result<bool> {
        self.check_disjoint([a, b, s])?;
        fn reaches(g: &Graph, v: usize, b: &VertexSet, s: &VertexSet, on_path: &mut Vec<bool>) -> bool {
            if b.contains(v) {
                return true;
            }
            on_path[v] = true;
            for &w in g.neighbors(v) {
                if on_path[w] || (s.contains(v) && s.contains(w)) {
                    continue;
                }
                if reaches(g, w, b, s, on_path) {
                    on_path[v] = false;
                    return true;
                }
            }
            on_path[v] = false;
            false
        }
        let mut on_path = vec![false; self.len()];
        Ok(!a.iter().any(|v| reaches(self, v, b, s, &mut on_path)))
    }

    /// Parses the edge-list text format: one `u v` pair per line, optional
    /// `root w` and `vertex w` lines, `#` starts a comment.
    pub fn parse_edge_list(text: &str) -> Result<Graph> {
        let mut labels: Vec<String> = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut root = None;
        let mut intern = |s: &str, labels: &mut Vec<String>| -> usize {
            if let Some(&i) = seen.get(s) {
                return i;
            }
            labels.push(s.to_string());
            seen.insert(s.to_string(), labels.len() - 1);
            labels.len() - 1
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let err = |msg: &str| GraphError::Parse { line: lineno + 1, msg: msg.to_string() };
            match toks.as_slice() {
                ["root", w] => {
                    if root.is_some() {
                        return Err(err("root declared twice"));
                    }
                    root = Some(intern(w, &mut labels));
                }
                ["vertex", w] => {
                    intern(w, &mut labels);
                }
                [u, v] => {
                    let a = intern(u, &mut labels);
                    let b = intern(v, &mut labels);
                    edges.push((a, b));
                }
                _ => return Err(err("expected `u v`, `root w` or `vertex w`")),
            }
        }
        let mut g = Graph::new(labels, &edges)?;
        g.root = root;
        Ok(g)
    }

    /// Serializes to the edge-list format. Isolated vertices are written as
    /// `vertex w` lines so that parsing recovers the same graph.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        if let Some(r) = self.root {
            out.push_str(&format!("root {}\n", self.labels[r]));
        }
        for (v, list) in self.adj.iter().enumerate() {
            if list.is_empty() {
                out.push_str(&format!("vertex {}\n", self.labels[v]));
            }
        }
        for (u, v) in self.edges() {
            out.push_str(&format!("{} {}\n", self.labels[u], self.labels[v]));
        }
        out
    }

    /// Whether two graphs have the same labels, edges (by label) and root,
    /// irrespective of vertex order.
    pub fn same_labeled_graph(&self, other: &Graph) -> bool {
        if self.len() != other.len() {
            return false;
        }
        let as_labels = |g: &Graph| -> BTreeSet<(String, String)> {
            g.edges()
                .into_iter()
                .map(|(u, v)| {
                    let (a, b) = (g.label(u).to_string(), g.label(v).to_string());
                    if a <= b {
                        (a, b)
                    } else {
                        (b, a)
                    }
                })
                .collect()
        };
        let la: BTreeSet<&String> = self.labels.iter().collect();
        let lb: BTreeSet<&String> = other.labels.iter().collect();
        la == lb
            && as_labels(self) == as_labels(other)
            && self.root.map(|r| self.label(r)) == other.root.map(|r| other.label(r))
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_edge_list())
    }
}

/// A locally finite, possibly infinite, rooted graph given by a neighbor
/// callback. Only ever materialized through [`materialize_ball`].
pub trait InfiniteGraph: Send + Sync {
    fn root(&self) -> String;
    fn neighbors(&self, label: &str) -> Vec<String>;
}

/// The integer line `ℤ` rooted at `0`, labels are decimal integers.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZLine;

impl InfiniteGraph for ZLine {
    fn root(&self) -> String {
        "0".to_string()
    }

    fn neighbors(&self, label: &str) -> Vec<String> {
        let i: i64 = label.parse().expect("ZLine labels are integers");
        vec![(i - 1).to_string(), (i + 1).to_string()]
    }
}

/// The square lattice `ℤ²` rooted at the origin; labels are `i_j`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZSquare;

impl InfiniteGraph for ZSquare {
    fn root(&self) -> String {
        "0_0".to_string()
    }

    fn neighbors(&self, label: &str) -> Vec<String> {
        let (a, b) = label.split_once('_').expect("ZSquare labels are i_j");
        let i: i64 = a.parse().expect("integer row");
        let j: i64 = b.parse().expect("integer column");
        vec![
            format!("{}_{}", i - 1, j),
            format!("{}_{}", i, j - 1),
            format!("{}_{}", i, j + 1),
            format!("{}_{}", i + 1, j),
        ]
    }
}

/// A rooted finite graph viewed through the callback interface.
impl InfiniteGraph for Graph {
    fn root(&self) -> String {
        self.label(self.root.expect("rooted graph")).to_string()
    }

    fn neighbors(&self, label: &str) -> Vec<String> {
        let v = self.vertex(label).expect("known vertex");
        self.adj[v].iter().map(|&u| self.labels[u].clone()).collect()
    }
}

/// The ball of radius `n` around the root with induced edges, as a rooted
/// finite graph. Vertices appear in BFS discovery order.
pub fn materialize_ball(graph: &dyn InfiniteGraph, n: usize) -> Graph {
    let root = graph.root();
    let mut labels = vec![root.clone()];
    let mut depth = vec![0usize];
    let mut index: HashMap<String, usize> = HashMap::from([(root, 0)]);
    let mut head = 0;
    while head < labels.len() {
        if depth[head] < n {
            for w in graph.neighbors(&labels[head]) {
                if !index.contains_key(&w) {
                    index.insert(w.clone(), labels.len());
                    labels.push(w);
                    depth.push(depth[head] + 1);
                }
            }
        }
        head += 1;
    }
    let mut edges = BTreeSet::new();
    for (i, l) in labels.iter().enumerate() {
        for w in graph.neighbors(l) {
            if let Some(&j) = index.get(&w) {
                if i != j {
                    edges.insert((i.min(j), i.max(j)));
                }
            }
        }
    }
    let edges: Vec<_> = edges.into_iter().collect();
    let mut g = Graph::new(labels, &edges).expect("ball of a simple graph is simple");
    g.root = Some(0);
    g
}

#[cfg(test)]
mod tests {
    use super::generators::*;
    use super::*;

    fn set(g: &Graph, labels: &[&str]) -> VertexSet {
        g.vertex_set(labels).unwrap()
    }

    fn labels(g: &Graph, s: &VertexSet) -> Vec<String> {
        g.labels_of(s).into_iter().map(String::from).collect()
    }

    #[test]
    fn neighbors_on_path() {
        let g = path(5);
        assert_eq!(labels(&g, &g.neighbor_set(g.vertex("3").unwrap()).unwrap()), ["2", "4"]);
        assert_eq!(labels(&g, &g.neighbor_set(g.vertex("1").unwrap()).unwrap()), ["2"]);
        let single = Graph::new(["a"], &[]).unwrap();
        assert!(single.neighbor_set(0).unwrap().is_empty());
        assert!(matches!(g.vertex("9"), Err(GraphError::UnknownVertex(_))));
        assert!(matches!(g.neighbor_set(7), Err(GraphError::IndexOutOfRange(7))));
    }

    #[test]
    fn boundaries_on_path() {
        let g = path(5);
        assert_eq!(g.boundary(&set(&g, &["1"])).unwrap(), set(&g, &["2"]));
        assert_eq!(g.boundary(&set(&g, &["2", "3"])).unwrap(), set(&g, &["1", "4"]));
        assert!(g.boundary(&g.all_vertices()).unwrap().is_empty());
        assert!(g.boundary(&VertexSet::new()).unwrap().is_empty());
        assert_eq!(g.boundary2(&set(&g, &["1"])).unwrap(), set(&g, &["2", "3"]));
        assert_eq!(g.boundary2(&set(&g, &["3"])).unwrap(), set(&g, &["1", "2", "4", "5"]));
        assert!(g.boundary(&VertexSet::from([11])).is_err());
    }

    #[test]
    fn second_boundary_on_grid_center() {
        let g = grid(5, 5);
        let center = g.vertex("2_2").unwrap();
        let b2 = g.boundary2(&VertexSet::singleton(center)).unwrap();
        let d = g.distances_from(center);
        let oracle: VertexSet = (0..g.len()).filter(|&v| matches!(d[v], Some(1) | Some(2))).collect();
        assert_eq!(b2.len(), 12);
        assert_eq!(b2, oracle);
    }

    #[test]
    fn distances() {
        let g = path(5);
        assert_eq!(g.distance(0, 4).unwrap(), Some(4));
        assert_eq!(g.distance(2, 2).unwrap(), Some(0));
        let two = Graph::new(["a", "b"], &[]).unwrap();
        assert_eq!(two.distance(0, 1).unwrap(), None);
        assert!(g.distance(0, 5).is_err());
    }

    fn subsets_with_diameter(g: &Graph, order: usize) -> BTreeSet<Vec<usize>> {
        let n = g.len();
        let dist = g.distance_matrix();
        (1u32..(1 << n))
            .map(|mask| (0..n).filter(|&i| mask >> i & 1 == 1).collect::<Vec<_>>())
            .filter(|s| s.iter().all(|&u| s.iter().all(|&v| matches!(dist[u][v], Some(d) if d <= order))))
            .collect()
    }

    #[test]
    fn clique_counts_match_subset_enumeration() {
        let p5 = path(5);
        let c2 = p5.cliques(2).unwrap();
        assert_eq!(c2.len(), 15);
        assert_eq!(c2.iter().filter(|c| c.len() == 1).count(), 5);
        assert_eq!(c2.iter().filter(|c| c.len() == 2).count(), 7);
        assert_eq!(c2.iter().filter(|c| c.len() == 3).count(), 3);
        let got: BTreeSet<Vec<usize>> = c2.iter().map(VertexSet::to_vec).collect();
        assert_eq!(got, subsets_with_diameter(&p5, 2));

        let k3 = complete(3);
        let c1 = k3.cliques(1).unwrap();
        assert_eq!(c1.len(), 7);
        assert_eq!(c1.iter().map(VertexSet::to_vec).collect::<BTreeSet<_>>(), subsets_with_diameter(&k3, 1));

        let single = Graph::new(["a"], &[]).unwrap();
        assert_eq!(single.cliques(2).unwrap().len(), 1);
        assert!(matches!(p5.cliques(3), Err(GraphError::BadCliqueOrder(3))));
    }

    #[test]
    fn cliques_sorted_by_size_then_lex() {
        let c = path(5).cliques(2).unwrap();
        for w in c.windows(2) {
            assert_eq!(size_lex_cmp(&w[0], &w[1]), std::cmp::Ordering::Less);
        }
        assert_eq!(c[5].to_vec(), vec![0, 1]);
        assert_eq!(c[6].to_vec(), vec![0, 2]);
    }

    #[test]
    fn square_graph_examples() {
        let sq = path(5).square_graph();
        let mut want = vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 2), (1, 3), (2, 4)];
        want.sort();
        assert_eq!(sq.edges(), want);
        assert_eq!(complete(3).square_graph(), complete(3));
        let p9 = path(9);
        let a = set(&p9, &["5"]);
        let via_square = p9.square_graph().boundary(&a).unwrap();
        assert_eq!(via_square, p9.boundary2(&a).unwrap());
        assert_eq!(via_square, set(&p9, &["3", "4", "6", "7"]));
    }

    #[test]
    fn balls() {
        let p9 = path(9).with_root("5").unwrap();
        assert_eq!(p9.ball(2).unwrap(), set(&p9, &["3", "4", "5", "6", "7"]));
        assert_eq!(p9.ball(0).unwrap(), set(&p9, &["5"]));
        let tree = regular_tree(3, 4);
        assert_eq!(tree.ball(2).unwrap().len(), 10);
        assert!(matches!(path(3).ball(1), Err(GraphError::NoRoot)));
        for n in 0..5 {
            assert!(tree.ball(n).unwrap().is_subset(&tree.ball(n + 1).unwrap()));
        }
    }

    #[test]
    fn augmented_truncation_of_line_segment() {
        let line = materialize_ball(&ZLine, 6);
        let g4 = line.augmented_truncation(4).unwrap();
        assert_eq!(g4.len(), 9);
        assert_eq!(g4.label(g4.root().unwrap()), "0");
        let un = g4.vertex_set(&["-4", "-3", "3", "4"]).unwrap();
        assert_eq!(line.annulus(4).unwrap().len(), 4);
        let induced = line.induced_subgraph(&line.ball(4).unwrap()).unwrap();
        let added: BTreeSet<(String, String)> = g4
            .edges()
            .into_iter()
            .filter(|&(u, v)| {
                !induced.has_edge(induced.vertex(g4.label(u)).unwrap(), induced.vertex(g4.label(v)).unwrap())
            })
            .map(|(u, v)| {
                let mut p = [g4.label(u).to_string(), g4.label(v).to_string()];
                p.sort();
                (p[0].clone(), p[1].clone())
            })
            .collect();
        let want: BTreeSet<(String, String)> = [("-4", "3"), ("-4", "4"), ("-3", "3"), ("-3", "4")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        assert_eq!(added, want);
        for u in un.iter() {
            for v in un.iter() {
                if u != v {
                    assert!(g4.has_edge(u, v));
                }
            }
        }
    }

    #[test]
    fn augmented_truncation_of_p9() {
        let p9 = path(9).with_root("5").unwrap();
        let g4 = p9.augmented_truncation(4).unwrap();
        assert_eq!(g4.len(), 9);
        let extra: Vec<(String, String)> = g4
            .edges()
            .into_iter()
            .filter(|&(u, v)| !p9.has_edge(u, v))
            .map(|(u, v)| (g4.label(u).to_string(), g4.label(v).to_string()))
            .collect();
        let want: Vec<(String, String)> = [("1", "8"), ("1", "9"), ("2", "8"), ("2", "9")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        assert_eq!(extra, want);
        assert!(matches!(p9.augmented_truncation(3), Err(GraphError::TruncationTooShallow(3))));
    }

    #[test]
    fn two_cutsets() {
        let g = path(5);
        assert!(g.is_2cutset(&set(&g, &["1"]), &set(&g, &["4", "5"]), &set(&g, &["2", "3"])).unwrap());
        assert!(!g.is_2cutset(&set(&g, &["1"]), &set(&g, &["3"]), &set(&g, &["2"])).unwrap());
        let c4 = cycle(4);
        let (a, b, s) = (set(&c4, &["1"]), set(&c4, &["3"]), set(&c4, &["2", "4"]));
        assert!(!c4.is_2cutset(&a, &b, &s).unwrap());
        assert!(!c4.is_2cutset_by_paths(&a, &b, &s).unwrap());
        assert!(matches!(
            g.is_2cutset(&set(&g, &["1"]), &set(&g, &["1"]), &set(&g, &["2"])),
            Err(GraphError::NotDisjoint)
        ));
    }

    #[test]
    fn edge_list_round_trip() {
        let text = "# a small graph\nroot b\na b\nb c # trailing\n\nvertex z\n";
        let g = Graph::parse_edge_list(text).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.label(g.root().unwrap()), "b");
        let again = Graph::parse_edge_list(&g.to_edge_list()).unwrap();
        assert!(g.same_labeled_graph(&again));
        assert!(matches!(Graph::parse_edge_list("a b c"), Err(GraphError::Parse { line: 1, .. })));
        assert!(matches!(Graph::parse_edge_list("a a"), Err(GraphError::SelfEdge(_))));
        assert!(matches!(Graph::parse_edge_list("a b\nb a"), Err(GraphError::DuplicateEdge(..))));
    }

    #[test]
    fn materialized_ball_matches_finite_ball() {
        let g = grid(5, 5).with_root("2_2").unwrap();
        let b = materialize_ball(&g, 2);
        let direct = g.induced_subgraph(&g.ball(2).unwrap()).unwrap();
        assert!(b.same_labeled_graph(&direct));
        let sq = materialize_ball(&ZSquare, 2);
        assert_eq!(sq.len(), 13);
    }
}
