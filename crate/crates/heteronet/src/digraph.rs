//! Directed graphs and the structural predicates that gate a realization.
//!
//! A [`Digraph`] stores a dense adjacency relation over a small vertex set.
//! Self-loops (1-cycles) are rejected at construction: a vertex never
//! connects to itself in the networks we build. The predicates here decide
//! whether a graph can be realized with the guarantees intact: transitivity,
//! absence of 2-cycles and Δ-cliques (non-transitive triangles), splitting
//! vertices, and a canonical decomposition into simple cycles.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DigraphError {
    #[error("malformed graph document: {0}")]
    Malformed(String),
    #[error("1-cycle at vertex {0}")]
    OneCycle(String),
    #[error("edge references unknown vertex \"{0}\"")]
    DanglingLabel(String),
    #[error("duplicate vertex label \"{0}\"")]
    DuplicateLabel(String),
    #[error("graph must have at least one vertex")]
    Empty,
    #[error("vertex index {index} out of range for graph with {n} vertices")]
    VertexOutOfRange { index: usize, n: usize },
    #[error("graph is not transitive: no directed path from {from} to {to}")]
    NotTransitive { from: String, to: String },
}

/// Directed graph on `n` vertices with a dense boolean adjacency relation.
///
/// `adj[i][j]` (row-major) is true iff there is an edge `i -> j`. Vertices
/// carry unique string labels; parsing and serialization go through the
/// document form `{"vertices": [...], "edges": [[src, dst], ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphDoc", into = "GraphDoc")]
pub struct Digraph {
    n: usize,
    adj: Vec<bool>,
    labels: Vec<String>,
}

/// Wire form of a graph document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDoc {
    pub vertices: Vec<String>,
    pub edges: Vec<(String, String)>,
}

impl TryFrom<GraphDoc> for Digraph {
    type Error = DigraphError;
    fn try_from(doc: GraphDoc) -> Result<Self, DigraphError> {
        Digraph::from_doc(&doc)
    }
}

impl From<Digraph> for GraphDoc {
    fn from(g: Digraph) -> GraphDoc {
        g.to_doc()
    }
}

impl Digraph {
    /// Build a graph with default labels `"1"`, `"2"`, ... and 0-based edges.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, DigraphError> {
        let labels = (1..=n).map(|i| i.to_string()).collect();
        Self::with_labels(labels, edges)
    }

    /// Build a graph from explicit labels and 0-based edges.
    pub fn with_labels(
        labels: Vec<String>,
        edges: &[(usize, usize)],
    ) -> Result<Self, DigraphError> {
        let n = labels.len();
        if n == 0 {
            return Err(DigraphError::Empty);
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(DigraphError::DuplicateLabel(l.clone()));
            }
        }
        let mut adj = vec![false; n * n];
        for &(i, j) in edges {
            for index in [i, j] {
                if index >= n {
                    return Err(DigraphError::VertexOutOfRange { index, n });
                }
            }
            if i == j {
                return Err(DigraphError::OneCycle(labels[i].clone()));
            }
            adj[i * n + j] = true;
        }
        Ok(Digraph { n, adj, labels })
    }

    fn from_doc(doc: &GraphDoc) -> Result<Self, DigraphError> {
        let mut edges = Vec::with_capacity(doc.edges.len());
        let index_of = |name: &str| -> Result<usize, DigraphError> {
            doc.vertices
                .iter()
                .position(|v| v == name)
                .ok_or_else(|| DigraphError::DanglingLabel(name.to_string()))
        };
        for (src, dst) in &doc.edges {
            edges.push((index_of(src)?, index_of(dst)?));
        }
        Self::with_labels(doc.vertices.clone(), &edges)
    }

    fn to_doc(&self) -> GraphDoc {
        GraphDoc {
            vertices: self.labels.clone(),
            edges: self
                .edges()
                .map(|(i, j)| (self.labels[i].clone(), self.labels[j].clone()))
                .collect(),
        }
    }

    /// Parse a graph document: JSON (`{"vertices": ..., "edges": ...}`) or an
    /// edge-list text with one `src -> dst` per line and `#` comments.
    /// Duplicate edges collapse to one.
    pub fn parse(text: &str) -> Result<Self, DigraphError> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            let doc: GraphDoc =
                serde_json::from_str(text).map_err(|e| DigraphError::Malformed(e.to_string()))?;
            Self::from_doc(&doc)
        } else {
            Self::parse_edge_list(text)
        }
    }

    /// Parse `src -> dst` lines; vertices appear in order of first mention.
    pub fn parse_edge_list(text: &str) -> Result<Self, DigraphError> {
        let mut labels: Vec<String> = Vec::new();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let intern = |labels: &mut Vec<String>, name: &str| -> usize {
            match labels.iter().position(|l| l == name) {
                Some(i) => i,
                None => {
                    labels.push(name.to_string());
                    labels.len() - 1
                }
            }
        };
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (src, dst) = line.split_once("->").ok_or_else(|| {
                DigraphError::Malformed(format!("line {}: expected `src -> dst`", lineno + 1))
            })?;
            let (src, dst) = (src.trim(), dst.trim());
            if src.is_empty() || dst.is_empty() {
                return Err(DigraphError::Malformed(format!(
                    "line {}: empty vertex name",
                    lineno + 1
                )));
            }
            let i = intern(&mut labels, src);
            let j = intern(&mut labels, dst);
            if i == j {
                return Err(DigraphError::OneCycle(labels[i].clone()));
            }
            edges.push((i, j));
        }
        Self::with_labels(labels, &edges)
    }

    /// Canonical JSON document for this graph.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("graph doc serializes")
    }

    /// DOT export, one edge per adjacency entry.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph G {\n");
        for i in 0..self.n {
            out.push_str(&format!("  \"{}\";\n", self.labels[i]));
        }
        for (i, j) in self.edges() {
            out.push_str(&format!(
                "  \"{}\" -> \"{}\";\n",
                self.labels[i], self.labels[j]
            ));
        }
        out.push_str("}\n");
        out
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j]
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn vertex_by_label(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    /// Edges in row-major (source, then target) order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            (0..self.n).filter_map(move |j| self.has_edge(i, j).then_some((i, j)))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&b| b).count()
    }

    pub fn out_neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_edge(i, j)).collect()
    }

    pub fn out_degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.has_edge(i, j)).count()
    }

    /// True iff every ordered pair of distinct vertices is joined by a
    /// directed path. Vacuously true for a single vertex.
    pub fn is_transitive(&self) -> bool {
        if self.n == 1 {
            return true;
        }
        self.reach_count(0, false) == self.n && self.reach_count(0, true) == self.n
    }

    fn reach_count(&self, start: usize, reversed: bool) -> usize {
        let mut seen = vec![false; self.n];
        let mut stack = vec![start];
        seen[start] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for v in 0..self.n {
                let connected = if reversed {
                    self.has_edge(v, u)
                } else {
                    self.has_edge(u, v)
                };
                if connected && !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count
    }

    /// Self-loop scan. Always empty for graphs built through this module;
    /// kept so the gate report states the hypothesis explicitly.
    pub fn one_cycles(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.has_edge(i, i)).collect()
    }

    /// All unordered pairs `{i, j}` with edges both ways, as `(i, j)` with
    /// `i < j`.
    pub fn two_cycles(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.has_edge(i, j) && self.has_edge(j, i) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// All Δ-cliques: ordered triples `(i, j, k)` with edges `i->j`, `j->k`
    /// and the shortcut `i->k`, in lexicographic order.
    pub fn delta_cliques(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if j == i || !self.has_edge(i, j) {
                    continue;
                }
                for k in 0..self.n {
                    if k == i || k == j {
                        continue;
                    }
                    if self.has_edge(j, k) && self.has_edge(i, k) {
                        out.push((i, j, k));
                    }
                }
            }
        }
        out
    }

    /// Splitting vertices and their orders.
    ///
    /// A vertex `w` with out-set `{v_1..v_k}`, `k >= 2`, splits with order
    /// `k` iff the subgraph induced on `{w, v_1..v_k}` contains only the
    /// edges `w -> v_j`.
    pub fn splitting_vertices(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for w in 0..self.n {
            let targets = self.out_neighbors(w);
            if targets.len() < 2 {
                continue;
            }
            let mut members = targets.clone();
            members.push(w);
            let only_fan_out = members.iter().all(|&a| {
                members
                    .iter()
                    .all(|&b| a == b || !self.has_edge(a, b) || a == w)
            });
            if only_fan_out {
                out.insert(w, targets.len());
            }
        }
        out
    }

    /// Subgraph induced on `subset` (0-based vertex indices, any order),
    /// keeping exactly the edges of `self` between members. Labels carry
    /// over; vertices are renumbered in the order given.
    pub fn induced_subgraph(&self, subset: &[usize]) -> Result<Digraph, DigraphError> {
        for &v in subset {
            if v >= self.n {
                return Err(DigraphError::VertexOutOfRange {
                    index: v,
                    n: self.n,
                });
            }
        }
        let labels: Vec<String> = subset.iter().map(|&v| self.labels[v].clone()).collect();
        let mut edges = Vec::new();
        for (a, &i) in subset.iter().enumerate() {
            for (b, &j) in subset.iter().enumerate() {
                if self.has_edge(i, j) {
                    edges.push((a, b));
                }
            }
        }
        Digraph::with_labels(labels, &edges)
    }

    /// Canonical decomposition into simple directed cycles covering every
    /// edge.
    ///
    /// For each edge the shortest cycle through it is included, with ties
    /// broken by the lexicographically smallest vertex sequence; each cycle
    /// is reported once, rotated so its smallest vertex comes first. Requires
    /// a transitive graph.
    pub fn cycle_decomposition(&self) -> Result<Vec<Vec<usize>>, DigraphError> {
        let mut cycles = std::collections::BTreeSet::new();
        for (u, v) in self.edges() {
            let dist = self.bfs_dist_to(u);
            if dist[v] == usize::MAX {
                return Err(DigraphError::NotTransitive {
                    from: self.labels[v].clone(),
                    to: self.labels[u].clone(),
                });
            }
            // Greedy lexicographically-smallest shortest path v -> u.
            let mut cycle = vec![u, v];
            let mut cur = v;
            while cur != u {
                let next = (0..self.n)
                    .find(|&w| {
                        self.has_edge(cur, w) && dist[w] != usize::MAX && dist[w] + 1 == dist[cur]
                    })
                    .expect("distance table admits a shortest step");
                if next != u {
                    cycle.push(next);
                }
                cur = next;
            }
            cycles.insert(canonical_rotation(&cycle));
        }
        Ok(cycles.into_iter().collect())
    }

    /// Distance from every vertex to `target` (BFS on reversed edges).
    fn bfs_dist_to(&self, target: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.n];
        dist[target] = 0;
        let mut queue = std::collections::VecDeque::from([target]);
        while let Some(u) = queue.pop_front() {
            for v in 0..self.n {
                if self.has_edge(v, u) && dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Evaluate all realization hypotheses at once.
    pub fn realization_gate(&self) -> GateReport {
        let transitive = self.is_transitive();
        let one_cycles = self.one_cycles();
        let two_cycles = self.two_cycles();
        let delta_cliques = self.delta_cliques();
        let eligible = transitive
            && one_cycles.is_empty()
            && two_cycles.is_empty()
            && delta_cliques.is_empty();
        GateReport {
            transitive,
            one_cycles,
            two_cycles,
            delta_cliques,
            eligible,
        }
    }
}

fn canonical_rotation(cycle: &[usize]) -> Vec<usize> {
    let pivot = cycle
        .iter()
        .enumerate()
        .min_by_key(|&(_, v)| v)
        .map(|(i, _)| i)
        .expect("cycle is nonempty");
    let mut out = Vec::with_capacity(cycle.len());
    out.extend_from_slice(&cycle[pivot..]);
    out.extend_from_slice(&cycle[..pivot]);
    out
}

impl fmt::Display for Digraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "digraph on {} vertices, {} edges",
            self.n,
            self.edge_count()
        )
    }
}

/// Outcome of checking the realization hypotheses: transitivity and absence
/// of 1-cycles, 2-cycles and Δ-cliques. `eligible` holds iff all four pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateReport {
    pub transitive: bool,
    pub one_cycles: Vec<usize>,
    pub two_cycles: Vec<(usize, usize)>,
    pub delta_cliques: Vec<(usize, usize, usize)>,
    pub eligible: bool,
}
