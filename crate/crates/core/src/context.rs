//! Context hierarchies: a DAG of context variables between a dummy root and
//! dummy leaves. A root-to-leaf path plus one value per internal node on it
//! is a [`Context`].

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Root,
    Internal,
    Leaf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DagNode {
    pub id: String,
    pub kind: NodeKind,
    /// Variable name; `None` for the dummy root and leaves.
    pub variable: Option<String>,
    /// Value names of the variable, one parameter set each.
    pub values: Vec<String>,
}

impl DagNode {
    pub fn root(id: &str) -> Self {
        Self {
            id: id.to_string(),
            kind: NodeKind::Root,
            variable: None,
            values: Vec::new(),
        }
    }

    pub fn leaf(id: &str) -> Self {
        Self {
            id: id.to_string(),
            kind: NodeKind::Leaf,
            variable: None,
            values: Vec::new(),
        }
    }

    pub fn internal(id: &str, variable: &str, values: &[&str]) -> Self {
        Self {
            id: id.to_string(),
            kind: NodeKind::Internal,
            variable: Some(variable.to_string()),
            values: values.iter().map(|v| v.to_string()).collect(),
        }
    }

    /// Internal node whose values are named `"0"`, `"1"`, ...
    pub fn internal_indexed(id: &str, variable: &str, cardinality: usize) -> Self {
        Self {
            id: id.to_string(),
            kind: NodeKind::Internal,
            variable: Some(variable.to_string()),
            values: (0..cardinality).map(|v| v.to_string()).collect(),
        }
    }

    /// Number of parameter sets: `|V|` for internal nodes, 1 for dummies.
    pub fn cardinality(&self) -> usize {
        match self.kind {
            NodeKind::Internal => self.values.len(),
            NodeKind::Root | NodeKind::Leaf => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DagViolation {
    NoRoot,
    MultipleRoots(usize),
    NoLeaf,
    EdgeIndex { edge: usize },
    DuplicateId(String),
    DuplicateEdge { from: usize, to: usize },
    RootHasParent,
    LeafHasChild(usize),
    Cycle,
    OffPath(usize),
    ZeroCardinality(usize),
    MissingVariable(usize),
}

impl core::fmt::Display for DagViolation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DagViolation::NoRoot => write!(f, "no root node"),
            DagViolation::MultipleRoots(n) => write!(f, "{n} root nodes"),
            DagViolation::NoLeaf => write!(f, "no leaf node"),
            DagViolation::EdgeIndex { edge } => write!(f, "edge {edge} references a missing node"),
            DagViolation::DuplicateId(id) => write!(f, "duplicate node id `{id}`"),
            DagViolation::DuplicateEdge { from, to } => write!(f, "duplicate edge {from} -> {to}"),
            DagViolation::RootHasParent => write!(f, "root node has an in-edge"),
            DagViolation::LeafHasChild(n) => write!(f, "leaf node {n} has an out-edge"),
            DagViolation::Cycle => write!(f, "graph contains a cycle"),
            DagViolation::OffPath(n) => write!(f, "node {n} lies on no root-to-leaf path"),
            DagViolation::ZeroCardinality(n) => write!(f, "node {n} has no values"),
            DagViolation::MissingVariable(n) => write!(f, "internal node {n} has no variable name"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContextPath(pub Vec<usize>);

/// A root-to-leaf path with one value index per internal node on it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Context {
    pub path: ContextPath,
    /// Value index for each internal node of `path`, in path order.
    pub assignment: Vec<usize>,
}

impl Context {
    /// The single context of [`ContextDag::trivial`].
    pub fn trivial() -> Self {
        Self {
            path: ContextPath(vec![0, 1]),
            assignment: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextDag {
    nodes: Vec<DagNode>,
    edges: Vec<(usize, usize)>,
    children: Vec<Vec<usize>>,
    parents: Vec<Vec<usize>>,
}

impl ContextDag {
    pub fn new(nodes: Vec<DagNode>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let dag = Self::from_parts(nodes, edges);
        let report = dag.validate();
        if let Some(first) = report.first() {
            return Err(Error::InvalidDag(format!("{first}")));
        }
        Ok(dag)
    }

    /// Builds the adjacency without validating; dangling edges are dropped
    /// from the adjacency but still reported by [`validate`](Self::validate).
    pub fn from_parts(nodes: Vec<DagNode>, edges: Vec<(usize, usize)>) -> Self {
        let n = nodes.len();
        let mut children = vec![Vec::new(); n];
        let mut parents = vec![Vec::new(); n];
        for &(from, to) in &edges {
            if from < n && to < n {
                children[from].push(to);
                parents[to].push(from);
            }
        }
        Self {
            nodes,
            edges,
            children,
            parents,
        }
    }

    /// Root connected straight to the leaf: one context, no variables.
    pub fn trivial() -> Self {
        Self::from_parts(vec![DagNode::root("root"), DagNode::leaf("leaf")], vec![(0, 1)])
    }

    /// Builds a DAG from node ids in the edge list.
    pub fn from_named_edges(nodes: Vec<DagNode>, edges: &[(&str, &str)]) -> Result<Self> {
        let index = |id: &str| {
            nodes
                .iter()
                .position(|n| n.id == id)
                .ok_or_else(|| Error::InvalidDag(format!("edge references unknown node `{id}`")))
        };
        let edges = edges
            .iter()
            .map(|(a, b)| Ok((index(a)?, index(b)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(nodes, edges)
    }

    pub fn nodes(&self) -> &[DagNode] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &DagNode {
        &self.nodes[index]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn root(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.kind == NodeKind::Root)
    }

    pub fn validate(&self) -> Vec<DagViolation> {
        let mut report = Vec::new();
        let n = self.nodes.len();
        let roots: Vec<usize> = (0..n).filter(|&i| self.nodes[i].kind == NodeKind::Root).collect();
        match roots.len() {
            0 => report.push(DagViolation::NoRoot),
            1 => {}
            k => report.push(DagViolation::MultipleRoots(k)),
        }
        if !self.nodes.iter().any(|x| x.kind == NodeKind::Leaf) {
            report.push(DagViolation::NoLeaf);
        }
        let mut seen_ids = BTreeSet::new();
        for node in &self.nodes {
            if !seen_ids.insert(node.id.as_str()) {
                report.push(DagViolation::DuplicateId(node.id.clone()));
            }
        }
        let mut seen_edges = BTreeSet::new();
        for (edge, &(from, to)) in self.edges.iter().enumerate() {
            if from >= n || to >= n {
                report.push(DagViolation::EdgeIndex { edge });
            } else if !seen_edges.insert((from, to)) {
                report.push(DagViolation::DuplicateEdge { from, to });
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match node.kind {
                NodeKind::Root if !self.parents[i].is_empty() => report.push(DagViolation::RootHasParent),
                NodeKind::Leaf if !self.children[i].is_empty() => report.push(DagViolation::LeafHasChild(i)),
                NodeKind::Internal => {
                    if node.values.is_empty() {
                        report.push(DagViolation::ZeroCardinality(i));
                    }
                    if node.variable.as_deref().map_or(true, str::is_empty) {
                        report.push(DagViolation::MissingVariable(i));
                    }
                }
                _ => {}
            }
        }
        if self.topological_order().is_none() {
            report.push(DagViolation::Cycle);
        } else if roots.len() == 1 {
            let from_root = self.reach(roots[0], |i| &self.children[i]);
            let mut to_leaf = vec![false; n];
            for (i, node) in self.nodes.iter().enumerate() {
                if node.kind == NodeKind::Leaf {
                    for (j, r) in self.reach(i, |k| &self.parents[k]).into_iter().enumerate() {
                        to_leaf[j] |= r;
                    }
                }
            }
            for i in 0..n {
                if self.nodes[i].kind == NodeKind::Internal && !(from_root[i] && to_leaf[i]) {
                    report.push(DagViolation::OffPath(i));
                }
            }
        }
        report
    }

    fn reach<'a>(&'a self, start: usize, next: impl Fn(usize) -> &'a [usize]) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for &j in next(i) {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    }

    /// Kahn's algorithm; `None` when the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let mut indegree: Vec<usize> = (0..n).map(|i| self.parents[i].len()).collect();
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        ready.reverse();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop() {
            order.push(i);
            for &j in &self.children[i] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push(j);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// All root-to-leaf paths in depth-first edge order.
    pub fn paths(&self) -> Vec<ContextPath> {
        let mut out = Vec::new();
        if let Some(root) = self.root() {
            let mut stack = vec![root];
            self.walk(&mut stack, &mut out);
        }
        out
    }

    fn walk(&self, stack: &mut Vec<usize>, out: &mut Vec<ContextPath>) {
        let last = *stack.last().expect("non-empty walk");
        if self.nodes[last].kind == NodeKind::Leaf {
            out.push(ContextPath(stack.clone()));
            return;
        }
        for &c in &self.children[last] {
            // a cyclic graph would recurse forever
            if stack.contains(&c) {
                continue;
            }
            stack.push(c);
            self.walk(stack, out);
            stack.pop();
        }
    }

    fn internal_nodes<'a>(&'a self, path: &'a ContextPath) -> impl Iterator<Item = usize> + 'a {
        path.0
            .iter()
            .copied()
            .filter(move |&i| self.nodes[i].kind == NodeKind::Internal)
    }

    /// Number of contexts: the sum over paths of the product of cardinalities.
    pub fn context_count(&self) -> usize {
        self.paths()
            .iter()
            .map(|p| self.internal_nodes(p).map(|i| self.nodes[i].cardinality()).product::<usize>())
            .sum()
    }

    /// Size of the full cross product of all variables, i.e. the number of
    /// contexts if every variable combination were a distinct task.
    pub fn cross_product_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Internal)
            .map(DagNode::cardinality)
            .product()
    }

    /// Every `(path, assignment)` pair; assignments vary fastest at the
    /// deepest node.
    pub fn enumerate_contexts(&self) -> Result<Vec<Context>> {
        if let Some(v) = self.validate().first() {
            return Err(Error::InvalidDag(format!("{v}")));
        }
        let mut out = Vec::new();
        for path in self.paths() {
            let cards: Vec<usize> = self.internal_nodes(&path).map(|i| self.nodes[i].cardinality()).collect();
            let mut assignment = vec![0usize; cards.len()];
            loop {
                out.push(Context {
                    path: path.clone(),
                    assignment: assignment.clone(),
                });
                // odometer increment
                let mut k = cards.len();
                loop {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                    assignment[k] += 1;
                    if assignment[k] < cards[k] {
                        break;
                    }
                    assignment[k] = 0;
                    if k == 0 {
                        k = usize::MAX;
                        break;
                    }
                }
                if cards.is_empty() || k == usize::MAX {
                    break;
                }
            }
        }
        Ok(out)
    }

    /// Checks a context's own invariants against this DAG.
    pub fn check_context(&self, context: &Context) -> Result<()> {
        let path = &context.path.0;
        let root = self.root().ok_or(Error::UnknownContext)?;
        if path.first() != Some(&root) {
            return Err(Error::UnknownContext);
        }
        let last = *path.last().ok_or(Error::UnknownContext)?;
        if last >= self.nodes.len() || self.nodes[last].kind != NodeKind::Leaf {
            return Err(Error::UnknownContext);
        }
        for w in path.windows(2) {
            if w[1] >= self.nodes.len() || !self.children[w[0]].contains(&w[1]) {
                return Err(Error::UnknownContext);
            }
        }
        let internals: Vec<usize> = self.internal_nodes(&context.path).collect();
        if internals.len() != context.assignment.len() {
            return Err(Error::UnknownContext);
        }
        for (&node, &value) in internals.iter().zip(&context.assignment) {
            if value >= self.nodes[node].cardinality() {
                return Err(Error::UnknownContext);
            }
        }
        Ok(())
    }

    /// `(node, parameter set)` for every node on the context path.
    pub fn selections(&self, context: &Context) -> Vec<(usize, usize)> {
        let mut values = context.assignment.iter();
        context
            .path
            .0
            .iter()
            .map(|&node| match self.nodes[node].kind {
                NodeKind::Internal => (node, *values.next().expect("assignment per internal node")),
                _ => (node, 0),
            })
            .collect()
    }

    /// The `(variable, value)` label of a context.
    pub fn label(&self, context: &Context) -> Vec<(String, String)> {
        self.internal_nodes(&context.path)
            .zip(&context.assignment)
            .map(|(i, &v)| {
                let node = &self.nodes[i];
                (node.variable.clone().unwrap_or_default(), node.values[v].clone())
            })
            .collect()
    }

    /// Human-readable context name such as `rule=RS/intention=TL`.
    pub fn context_name(&self, context: &Context) -> String {
        let label = self.label(context);
        if label.is_empty() {
            return String::from("default");
        }
        label
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("/")
    }

    /// Maps a `(variable, value)` label to the unique matching context.
    ///
    /// Paths whose variables are exactly the label's are preferred; if none
    /// exist, paths containing all label variables are considered and more
    /// than one of them is an ambiguity.
    pub fn resolve_label(&self, label: &[(String, String)]) -> Result<Context> {
        for (name, _) in label {
            let known = self.nodes.iter().any(|n| n.variable.as_deref() == Some(name.as_str()));
            if !known {
                return Err(Error::UnknownVariable(name.clone()));
            }
        }
        let paths = self.paths();
        let names_of = |p: &ContextPath| -> Vec<&str> {
            self.internal_nodes(p)
                .map(|i| self.nodes[i].variable.as_deref().unwrap_or(""))
                .collect()
        };
        let exact: Vec<&ContextPath> = paths
            .iter()
            .filter(|p| {
                let names = names_of(p);
                names.len() == label.len() && label.iter().all(|(k, _)| names.contains(&k.as_str()))
            })
            .collect();
        if exact.is_empty() {
            let partial = paths
                .iter()
                .filter(|p| {
                    let names = names_of(p);
                    label.iter().all(|(k, _)| names.contains(&k.as_str()))
                })
                .count();
            return Err(if partial > 1 {
                Error::AmbiguousLabel(partial)
            } else {
                Error::NoMatchingPath
            });
        }
        let mut matches = Vec::new();
        let mut out_of_range = None;
        for path in exact {
            let mut assignment = Vec::new();
            let mut ok = true;
            for i in self.internal_nodes(path) {
                let node = &self.nodes[i];
                let var = node.variable.as_deref().unwrap_or("");
                let (_, value) = label.iter().find(|(k, _)| k == var).expect("exact name match");
                match node.values.iter().position(|v| v == value) {
                    Some(v) => assignment.push(v),
                    None => {
                        out_of_range.get_or_insert((var.to_string(), value.clone()));
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                matches.push(Context {
                    path: path.clone(),
                    assignment,
                });
            }
        }
        match matches.len() {
            1 => Ok(matches.pop().expect("one match")),
            0 => {
                let (variable, value) = out_of_range.unwrap_or_default();
                Err(Error::ValueOutOfRange { variable, value })
            }
            k => Err(Error::AmbiguousLabel(k)),
        }
    }
}
