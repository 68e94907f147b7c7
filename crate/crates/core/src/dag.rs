//! Causal graph on `(s, x_1, ..., x_d, [y])`: parsing, validation and
//! deterministic topological ordering.
//!
//! The sensitive attribute is a source (no parents) and the optional outcome
//! is a sink (no children). Every other node is a transported variable.

use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::cmp::Reverse;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DagError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown role tag `@{tag}`")]
    UnknownRole { line: usize, tag: String },
    #[error("line {line}: duplicate edge {from} -> {to}")]
    DuplicateEdge { line: usize, from: String, to: String },
    #[error("line {line}: role `@{role}` assigned twice")]
    DuplicateRole { line: usize, role: String },
    #[error("no `@sensitive` node declared")]
    MissingSensitive,
    #[error("duplicate node name `{0}`")]
    DuplicateNode(String),
    #[error("self-loop on `{0}`")]
    SelfLoop(String),
    #[error("cycle detected: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("sensitive node `{node}` has parents: {}", .parents.join(", "))]
    SensitiveHasParents { node: String, parents: Vec<String> },
    #[error("outcome node `{node}` has children: {}", .children.join(", "))]
    OutcomeHasChildren { node: String, children: Vec<String> },
    #[error("sensitive and outcome roles both assigned to `{0}`")]
    RoleConflict(String),
    #[error("node index {index} out of range (graph has {len} nodes)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
}

/// Directed acyclic graph with a sensitive source and an optional outcome sink.
///
/// `adjacency[i][j] == true` means the edge `i -> j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalDag {
    node_names: Vec<String>,
    adjacency: Vec<Vec<bool>>,
    sensitive: usize,
    outcome: Option<usize>,
}

impl CausalDag {
    /// Builds and validates a graph from node names and an edge list of indices.
    pub fn new(
        node_names: Vec<String>,
        edges: &[(usize, usize)],
        sensitive: usize,
        outcome: Option<usize>,
    ) -> Result<Self, DagError> {
        let dag = Self::from_parts(node_names, edges, sensitive, outcome)?;
        dag.validate()?;
        Ok(dag)
    }

    /// Builds a graph without checking acyclicity or role constraints.
    /// Index bounds are still checked.
    pub(crate) fn from_parts(
        node_names: Vec<String>,
        edges: &[(usize, usize)],
        sensitive: usize,
        outcome: Option<usize>,
    ) -> Result<Self, DagError> {
        let n = node_names.len();
        let check = |index: usize| {
            if index < n {
                Ok(())
            } else {
                Err(DagError::IndexOutOfRange { index, len: n })
            }
        };
        check(sensitive)?;
        if let Some(o) = outcome {
            check(o)?;
        }
        let mut adjacency = vec![vec![false; n]; n];
        for &(from, to) in edges {
            check(from)?;
            check(to)?;
            adjacency[from][to] = true;
        }
        Ok(Self {
            node_names,
            adjacency,
            sensitive,
            outcome,
        })
    }

    /// Builds a graph from node names, naming edges and roles by name.
    pub fn from_named_edges(
        node_names: &[&str],
        edges: &[(&str, &str)],
        sensitive: &str,
        outcome: Option<&str>,
    ) -> Result<Self, DagError> {
        let lookup = |name: &str| {
            node_names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| DagError::UnknownNode(name.to_string()))
        };
        let idx_edges = edges
            .iter()
            .map(|(a, b)| Ok((lookup(a)?, lookup(b)?)))
            .collect::<Result<Vec<_>, DagError>>()?;
        let s = lookup(sensitive)?;
        let y = outcome.map(lookup).transpose()?;
        Self::new(
            node_names.iter().map(|s| s.to_string()).collect(),
            &idx_edges,
            s,
            y,
        )
    }

    pub fn len(&self) -> usize {
        self.node_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_names.is_empty()
    }

    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    pub fn name(&self, node: usize) -> &str {
        &self.node_names[node]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.node_names.iter().position(|n| n == name)
    }

    pub fn adjacency(&self) -> &[Vec<bool>] {
        &self.adjacency
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adjacency[from][to]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().flatten().filter(|e| **e).count()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if self.adjacency[i][j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn sensitive(&self) -> usize {
        self.sensitive
    }

    pub fn outcome(&self) -> Option<usize> {
        self.outcome
    }

    /// Nodes that are neither sensitive nor outcome, in declaration order.
    /// This is the layout of every feature vector handled by the transport code.
    pub fn transported_nodes(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| i != self.sensitive && Some(i) != self.outcome)
            .collect()
    }

    /// Exact in-neighbour set, ascending.
    pub fn parents(&self, node: usize) -> Result<Vec<usize>, DagError> {
        if node >= self.len() {
            return Err(DagError::IndexOutOfRange {
                index: node,
                len: self.len(),
            });
        }
        Ok((0..self.len()).filter(|&i| self.adjacency[i][node]).collect())
    }

    pub fn children(&self, node: usize) -> Result<Vec<usize>, DagError> {
        if node >= self.len() {
            return Err(DagError::IndexOutOfRange {
                index: node,
                len: self.len(),
            });
        }
        Ok((0..self.len()).filter(|&j| self.adjacency[node][j]).collect())
    }

    /// Checks every structural invariant: unique names, no self-loops,
    /// acyclicity, sensitive source and outcome sink.
    pub fn validate(&self) -> Result<(), DagError> {
        let mut seen = BTreeSet::new();
        for name in &self.node_names {
            if !seen.insert(name.as_str()) {
                return Err(DagError::DuplicateNode(name.clone()));
            }
        }
        for i in 0..self.len() {
            if self.adjacency[i][i] {
                return Err(DagError::SelfLoop(self.node_names[i].clone()));
            }
        }
        if let Some(cycle) = self.find_cycle() {
            return Err(DagError::CycleDetected(
                cycle.iter().map(|&i| self.node_names[i].clone()).collect(),
            ));
        }
        let s = self.sensitive;
        if Some(s) == self.outcome {
            return Err(DagError::RoleConflict(self.node_names[s].clone()));
        }
        let parents = self.parents(s)?;
        if !parents.is_empty() {
            return Err(DagError::SensitiveHasParents {
                node: self.node_names[s].clone(),
                parents: parents.iter().map(|&p| self.node_names[p].clone()).collect(),
            });
        }
        if let Some(y) = self.outcome {
            let children = self.children(y)?;
            if !children.is_empty() {
                return Err(DagError::OutcomeHasChildren {
                    node: self.node_names[y].clone(),
                    children: children
                        .iter()
                        .map(|&c| self.node_names[c].clone())
                        .collect(),
                });
            }
        }
        Ok(())
    }

    /// Returns one directed cycle (first node repeated at the end), if any.
    fn find_cycle(&self) -> Option<Vec<usize>> {
        // Kahn peel; whatever survives contains a cycle.
        let n = self.len();
        let mut indeg: Vec<usize> = (0..n)
            .map(|j| (0..n).filter(|&i| self.adjacency[i][j]).count())
            .collect();
        let mut alive = vec![true; n];
        let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        while let Some(u) = stack.pop() {
            alive[u] = false;
            for v in 0..n {
                if self.adjacency[u][v] {
                    indeg[v] -= 1;
                    if indeg[v] == 0 {
                        stack.push(v);
                    }
                }
            }
        }
        let start = alive.iter().position(|a| *a)?;
        // Every surviving node has a surviving parent; walk backwards until a repeat.
        let mut path = vec![start];
        let mut pos: HashMap<usize, usize> = HashMap::from([(start, 0)]);
        let mut cur = start;
        loop {
            let prev = (0..n)
                .find(|&p| alive[p] && self.adjacency[p][cur])
                .expect("surviving node keeps a surviving parent");
            if let Some(&at) = pos.get(&prev) {
                let mut cycle: Vec<usize> = path[at..].to_vec();
                cycle.reverse();
                cycle.push(cycle[0]);
                return Some(cycle);
            }
            pos.insert(prev, path.len());
            path.push(prev);
            cur = prev;
        }
    }

    /// Canonical text rendering; parsing it yields an identical graph.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, j) in self.edges() {
            out.push_str(&format!("{} -> {}\n", self.node_names[i], self.node_names[j]));
        }
        out.push_str(&format!("@sensitive {}\n", self.node_names[self.sensitive]));
        if let Some(y) = self.outcome {
            out.push_str(&format!("@outcome {}\n", self.node_names[y]));
        }
        out
    }
}

impl fmt::Display for CausalDag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Transport order: the sensitive node first (implicitly, identity map), then
/// every transported variable such that parents precede children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologicalOrder {
    sensitive: usize,
    order: Vec<usize>,
}

impl TopologicalOrder {
    /// Transported node indices, in order. Excludes sensitive and outcome.
    pub fn variables(&self) -> &[usize] {
        &self.order
    }

    pub fn sensitive(&self) -> usize {
        self.sensitive
    }

    /// Full order with the sensitive node at position 0.
    pub fn with_sensitive(&self) -> Vec<usize> {
        std::iter::once(self.sensitive)
            .chain(self.order.iter().copied())
            .collect()
    }

    pub fn position(&self, node: usize) -> Option<usize> {
        if node == self.sensitive {
            return Some(0);
        }
        self.order.iter().position(|&v| v == node).map(|p| p + 1)
    }
}

/// Kahn's algorithm with a min-heap of ready vertices, so ties go to the
/// lowest input index.
pub fn topological_order(dag: &CausalDag) -> Result<TopologicalOrder, DagError> {
    dag.validate()?;
    let n = dag.len();
    let mut indeg: Vec<usize> = (0..n)
        .map(|j| (0..n).filter(|&i| dag.adjacency[i][j]).count())
        .collect();
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&i| indeg[i] == 0).map(Reverse).collect();
    let mut full = Vec::with_capacity(n);
    while let Some(Reverse(u)) = ready.pop() {
        full.push(u);
        for v in 0..n {
            if dag.adjacency[u][v] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.push(Reverse(v));
                }
            }
        }
    }
    debug_assert_eq!(full.len(), n, "validated graph must be acyclic");
    let order = full
        .into_iter()
        .filter(|&i| i != dag.sensitive && Some(i) != dag.outcome)
        .collect();
    Ok(TopologicalOrder {
        sensitive: dag.sensitive,
        order,
    })
}

fn is_identifier(token: &str) -> bool {
    !token.is_empty()
        && token
            .chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '.' || c == '-')
}

/// Parses the edge-list format:
///
/// ```text
/// # comment
/// s -> x1
/// x1 -> x2
/// @sensitive s
/// @outcome y
/// ```
///
/// Nodes are numbered in order of first appearance.
pub fn parse_dag(text: &str) -> Result<CausalDag, DagError> {
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut sensitive: Option<usize> = None;
    let mut outcome: Option<usize> = None;

    let mut intern = |name: &str, names: &mut Vec<String>| -> usize {
        *index.entry(name.to_string()).or_insert_with(|| {
            names.push(name.to_string());
            names.len() - 1
        })
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('@') {
            let mut parts = rest.split_whitespace();
            let tag = parts.next().unwrap_or("");
            let node = parts.next();
            if parts.next().is_some() {
                return Err(DagError::Syntax {
                    line: line_no,
                    message: "role line takes exactly one node name".into(),
                });
            }
            let slot = match tag {
                "sensitive" => &mut sensitive,
                "outcome" => &mut outcome,
                _ => {
                    return Err(DagError::UnknownRole {
                        line: line_no,
                        tag: tag.to_string(),
                    })
                }
            };
            let node = match node {
                Some(n) if is_identifier(n) => n,
                _ => {
                    return Err(DagError::Syntax {
                        line: line_no,
                        message: format!("`@{tag}` needs a node name"),
                    })
                }
            };
            if slot.is_some() {
                return Err(DagError::DuplicateRole {
                    line: line_no,
                    role: tag.to_string(),
                });
            }
            *slot = Some(intern(node, &mut names));
            continue;
        }
        let Some((lhs, rhs)) = line.split_once("->") else {
            return Err(DagError::Syntax {
                line: line_no,
                message: format!("expected `A -> B`, found `{line}`"),
            });
        };
        let (from, to) = (lhs.trim(), rhs.trim());
        if !is_identifier(from) || !is_identifier(to) {
            return Err(DagError::Syntax {
                line: line_no,
                message: format!("invalid node name in `{line}`"),
            });
        }
        let (a, b) = (intern(from, &mut names), intern(to, &mut names));
        if edges.contains(&(a, b)) {
            return Err(DagError::DuplicateEdge {
                line: line_no,
                from: from.to_string(),
                to: to.to_string(),
            });
        }
        edges.push((a, b));
    }
    let sensitive = sensitive.ok_or(DagError::MissingSensitive)?;
    CausalDag::new(names, &edges, sensitive, outcome)
}
