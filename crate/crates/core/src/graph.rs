//! Typed dependency graph over chunks, annotations and file targets.
//!
//! Edge kinds:
//! - `inclusion`: a chunk containing a `<<name>>` line, and a file target
//!   containing its named chunks. Must be acyclic.
//! - `declared`: `#:depends` entries and step-spec helper references.
//! - `textual`: whole-token occurrences of known names in chunk bodies,
//!   annotation forms and narrative code spans.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::model::{display_path, Document, DocumentSet, SourceSpan};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Inclusion,
    Declared,
    Textual,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 3] = [EdgeKind::Inclusion, EdgeKind::Declared, EdgeKind::Textual];
    /// Edges that express a real dependency (used for ordering and packing).
    pub const HARD: [EdgeKind; 2] = [EdgeKind::Inclusion, EdgeKind::Declared];
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeKind::Inclusion => "inclusion",
            EdgeKind::Declared => "declared",
            EdgeKind::Textual => "textual",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeRole {
    Chunk,
    Annotation,
    StepSpec,
    FileTarget,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NodeInfo {
    pub roles: BTreeSet<NodeRole>,
    /// (document index, byte offset) of the first definition.
    pub position: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: EdgeKind,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("dependency cycle: {}", format_cycle(.0))]
    Cycle(Vec<NodeId>),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
}

fn format_cycle(path: &[NodeId]) -> String {
    let mut out: Vec<&str> = path.iter().map(NodeId::as_str).collect();
    if let Some(first) = path.first() {
        out.push(first.as_str());
    }
    out.join(" -> ")
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DependencyGraph {
    pub nodes: BTreeMap<NodeId, NodeInfo>,
    /// Sorted and free of exact duplicates.
    pub edges: Vec<Edge>,
}

/// Characters that may appear in a name token.
pub fn is_name_char(c: char) -> bool {
    c.is_alphanumeric() || "_?!+*/<>=-".contains(c)
}

/// Byte ranges of maximal name-character runs in `text`.
pub fn name_tokens(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (is_name_char(c), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, &text[s..i]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, &text[s..]));
    }
    out.into_iter()
}

/// Byte ranges of single-backtick code spans within one line of narrative,
/// excluding the backticks.
pub fn code_spans(line: &str) -> Vec<std::ops::Range<usize>> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, c) in line.char_indices() {
        if c == '`' {
            match open.take() {
                Some(start) => spans.push(start..i),
                None => open = Some(i + 1),
            }
        }
    }
    spans
}

impl DependencyGraph {
    pub fn add_node(&mut self, id: NodeId, role: NodeRole, position: (usize, usize)) {
        let info = self.nodes.entry(id).or_insert_with(|| NodeInfo {
            roles: BTreeSet::new(),
            position,
        });
        info.roles.insert(role);
        info.position = info.position.min(position);
    }

    /// Adds an edge when both endpoints are known nodes; call
    /// [`DependencyGraph::finish`] afterwards.
    pub fn add_edge(&mut self, from: NodeId, to: NodeId, kind: EdgeKind, span: SourceSpan) -> bool {
        if from == to || !self.nodes.contains_key(&from) || !self.nodes.contains_key(&to) {
            return false;
        }
        self.edges.push(Edge {
            from,
            to,
            kind,
            span,
        });
        true
    }

    pub fn finish(&mut self) {
        self.edges.sort();
        self.edges.dedup();
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(&NodeId::from(id))
    }

    fn order_key(&self, id: &NodeId) -> ((usize, usize), NodeId) {
        let pos = self
            .nodes
            .get(id)
            .map_or((usize::MAX, usize::MAX), |n| n.position);
        (pos, id.clone())
    }

    /// Distinct successors of every node over the given edge kinds.
    fn adjacency(&self, kinds: &[EdgeKind]) -> BTreeMap<&NodeId, BTreeSet<&NodeId>> {
        let mut adj: BTreeMap<&NodeId, BTreeSet<&NodeId>> = BTreeMap::new();
        for e in self.edges.iter().filter(|e| kinds.contains(&e.kind)) {
            adj.entry(&e.from).or_default().insert(&e.to);
        }
        adj
    }

    pub fn edges_of<'a>(&'a self, kinds: &'a [EdgeKind]) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges.iter().filter(move |e| kinds.contains(&e.kind))
    }

    /// All nodes, every dependency before its dependents. Ties are broken by
    /// document order, then by name.
    pub fn topological_order(&self, kinds: &[EdgeKind]) -> Result<Vec<NodeId>, GraphError> {
        let adj = self.adjacency(kinds);
        let mut pending: HashMap<&NodeId, usize> = self
            .nodes
            .keys()
            .map(|id| (id, adj.get(id).map_or(0, |s| s.len())))
            .collect();
        let mut dependents: HashMap<&NodeId, Vec<&NodeId>> = HashMap::new();
        for (from, tos) in &adj {
            for to in tos {
                dependents.entry(*to).or_default().push(*from);
            }
        }
        let mut ready: BTreeSet<((usize, usize), NodeId)> = pending
            .iter()
            .filter(|(_, &n)| n == 0)
            .map(|(id, _)| self.order_key(id))
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(next) = ready.pop_first() {
            let id = next.1;
            if let Some(ds) = dependents.get(&id) {
                for d in ds {
                    let n = pending.get_mut(d).expect("known node");
                    *n -= 1;
                    if *n == 0 {
                        ready.insert(self.order_key(d));
                    }
                }
            }
            order.push(id);
        }
        if order.len() == self.nodes.len() {
            return Ok(order);
        }
        let remaining: BTreeSet<&NodeId> = pending
            .iter()
            .filter(|(_, &n)| n > 0)
            .map(|(id, _)| *id)
            .collect();
        Err(GraphError::Cycle(self.cycle_within(&adj, &remaining)))
    }

    /// Walks successor links inside `remaining` (every node there has one)
    /// until a node repeats.
    fn cycle_within(
        &self,
        adj: &BTreeMap<&NodeId, BTreeSet<&NodeId>>,
        remaining: &BTreeSet<&NodeId>,
    ) -> Vec<NodeId> {
        let start = remaining
            .iter()
            .min_by_key(|id| self.order_key(id))
            .expect("non-empty remainder");
        let mut path: Vec<&NodeId> = vec![start];
        let mut seen: HashMap<&NodeId, usize> = HashMap::from([(*start, 0)]);
        loop {
            let cur = *path.last().expect("non-empty");
            let next = adj[cur]
                .iter()
                .filter(|n| remaining.contains(*n))
                .min_by_key(|n| self.order_key(n))
                .expect("stalled node has a pending successor");
            if let Some(&at) = seen.get(next) {
                return path[at..].iter().map(|n| (*n).clone()).collect();
            }
            seen.insert(next, path.len());
            path.push(next);
        }
    }

    /// The induced subgraph on `keep`.
    pub fn subgraph(&self, keep: &BTreeSet<NodeId>) -> DependencyGraph {
        DependencyGraph {
            nodes: self
                .nodes
                .iter()
                .filter(|(id, _)| keep.contains(*id))
                .map(|(id, info)| (id.clone(), info.clone()))
                .collect(),
            edges: self
                .edges
                .iter()
                .filter(|e| keep.contains(&e.from) && keep.contains(&e.to))
                .cloned()
                .collect(),
        }
    }

    /// Returns a cycle over the given edge kinds, if any.
    pub fn find_cycle(&self, kinds: &[EdgeKind]) -> Option<Vec<NodeId>> {
        match self.topological_order(kinds) {
            Err(GraphError::Cycle(path)) => Some(path),
            _ => None,
        }
    }

    /// Nodes reachable from `target`, grouped in breadth-first layers.
    pub fn reachable_layers(
        &self,
        target: &str,
        kinds: &[EdgeKind],
        max_depth: Option<usize>,
    ) -> Result<Vec<Vec<NodeId>>, GraphError> {
        let target = NodeId::from(target);
        if !self.nodes.contains_key(&target) {
            return Err(GraphError::UnknownNode(target.0));
        }
        let adj = self.adjacency(kinds);
        let mut visited: BTreeSet<NodeId> = BTreeSet::from([target.clone()]);
        let mut layers = Vec::new();
        let mut frontier = vec![target];
        while !frontier.is_empty() && max_depth.is_none_or(|d| layers.len() < d) {
            let mut next: Vec<NodeId> = Vec::new();
            for id in &frontier {
                for succ in adj.get(id).into_iter().flatten() {
                    if visited.insert((*succ).clone()) {
                        next.push((*succ).clone());
                    }
                }
            }
            next.sort_by_key(|id| self.order_key(id));
            if !next.is_empty() {
                layers.push(next.clone());
            }
            frontier = next;
        }
        Ok(layers)
    }

    /// Flattened [`DependencyGraph::reachable_layers`]; `target` excluded.
    pub fn reachable(&self, target: &str, kinds: &[EdgeKind]) -> Result<Vec<NodeId>, GraphError> {
        Ok(self
            .reachable_layers(target, kinds, None)?
            .into_iter()
            .flatten()
            .collect())
    }

    /// Graphviz rendering.
    pub fn to_dot(&self) -> String {
        let quote = |s: &str| format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""));
        let mut out = String::from("digraph ilp {\n");
        for id in self.nodes.keys() {
            let _ = writeln!(out, "  {};", quote(id.as_str()));
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            if seen.insert((&e.from, &e.to, e.kind)) {
                let _ = writeln!(
                    out,
                    "  {} -> {} [kind={}];",
                    quote(e.from.as_str()),
                    quote(e.to.as_str()),
                    e.kind
                );
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Name of the nearest enclosing heading (walking outwards through the
/// heading hierarchy) whose plain title is one of `known`.
fn enclosing_node(doc: &Document, offset: usize, known: &BTreeSet<String>) -> Option<String> {
    let preceding: Vec<_> = doc
        .headings()
        .filter(|h| h.span.byte_start <= offset)
        .collect();
    let mut min_level = u8::MAX;
    for h in preceding.iter().rev() {
        if offset < h.span.byte_end {
            // The span sits in this heading's own line: look at its parents.
            min_level = h.level;
            continue;
        }
        if h.level < min_level {
            let title = h.title.trim().trim_matches('`').trim();
            if known.contains(title) {
                return Some(title.to_string());
            }
            min_level = h.level;
        }
    }
    None
}

/// Builds the dependency graph of a validated document set.
pub fn build_graph(set: &DocumentSet) -> DependencyGraph {
    let mut g = DependencyGraph::default();

    for (di, doc) in set.documents.iter().enumerate() {
        for a in &doc.annotations {
            g.add_node(
                NodeId(a.name.clone()),
                NodeRole::Annotation,
                (di, a.span.byte_start),
            );
        }
        for s in &doc.step_specs {
            g.add_node(
                NodeId(s.api_name.clone()),
                NodeRole::StepSpec,
                (di, s.span.byte_start),
            );
        }
    }
    for (r, chunk) in set.chunks() {
        let pos = (r.doc, chunk.span.byte_start);
        if let Some(name) = &chunk.name {
            g.add_node(NodeId(name.clone()), NodeRole::Chunk, pos);
        }
        if let Some(target) = &chunk.file_target {
            if chunk.is_tangleable() {
                g.add_node(NodeId(target.clone()), NodeRole::FileTarget, pos);
            }
        }
    }
    let known: BTreeSet<String> = g.nodes.keys().map(|n| n.0.clone()).collect();

    // Inclusion edges.
    for (r, chunk) in set.chunks() {
        if !chunk.is_tangleable() {
            continue;
        }
        let doc = &set.documents[r.doc];
        if let (Some(target), Some(name)) = (&chunk.file_target, &chunk.name) {
            g.add_edge(
                NodeId(target.clone()),
                NodeId(name.clone()),
                EdgeKind::Inclusion,
                chunk.span.clone(),
            );
        }
        let Some(from) = chunk.name.as_ref().or(chunk.file_target.as_ref()) else {
            continue;
        };
        let line_starts: Vec<usize> = std::iter::once(chunk.body_range.start)
            .chain(
                doc.raw_text[chunk.body_range.clone()]
                    .match_indices('\n')
                    .map(|(i, _)| chunk.body_range.start + i + 1),
            )
            .collect();
        for (line, _, to) in chunk.references() {
            let start = line_starts[line];
            let end = start + chunk.body[line].len();
            g.add_edge(
                NodeId(from.clone()),
                NodeId(to.to_string()),
                EdgeKind::Inclusion,
                doc.span(start..end),
            );
        }
    }

    // Declared edges.
    for a in set.annotations() {
        for dep in &a.depends {
            g.add_edge(
                NodeId(a.name.clone()),
                NodeId(dep.clone()),
                EdgeKind::Declared,
                a.span.clone(),
            );
        }
    }
    for s in set.step_specs() {
        for h in &s.helpers {
            g.add_edge(
                NodeId(s.api_name.clone()),
                NodeId(h.name.clone()),
                EdgeKind::Declared,
                h.span.clone(),
            );
        }
    }

    // Textual edges.
    for doc in &set.documents {
        let scan = |from: &str, base: usize, text: &str, g: &mut DependencyGraph| {
            for (off, tok) in name_tokens(text) {
                if known.contains(tok) {
                    g.add_edge(
                        NodeId::from(from),
                        NodeId::from(tok),
                        EdgeKind::Textual,
                        doc.span(base + off..base + off + tok.len()),
                    );
                }
            }
        };
        for chunk in doc.chunks() {
            if let Some(from) = chunk.name.as_ref().or(chunk.file_target.as_ref()) {
                if known.contains(from) {
                    let text = &doc.raw_text[chunk.body_range.clone()];
                    scan(from, chunk.body_range.start, text, &mut g);
                }
            }
        }
        for a in &doc.annotations {
            let text = &doc.raw_text[a.span.range()];
            scan(&a.name, a.span.byte_start, text, &mut g);
        }
        for block in &doc.blocks {
            let crate::model::Block::Narrative(n) = block else {
                continue;
            };
            let mut offset = n.span.byte_start;
            for line in n.markdown_text.split_inclusive('\n') {
                for span in code_spans(line) {
                    let abs = offset + span.start;
                    if let Some(from) = enclosing_node(doc, abs, &known) {
                        scan(&from, abs, &line[span], &mut g);
                    }
                }
                offset += line.len();
            }
        }
    }

    g.finish();
    g
}

/// Plain-text edge listing: `from -> to [kind] at path:line`.
pub fn describe(graph: &DependencyGraph) -> String {
    let mut out = String::new();
    for id in graph.nodes.keys() {
        let _ = writeln!(out, "node {id}");
    }
    for e in &graph.edges {
        let _ = writeln!(
            out,
            "{} -> {} [{}] at {}:{}",
            e.from,
            e.to,
            e.kind,
            display_path(&e.span.document_path),
            e.span.line_start
        );
    }
    out
}
