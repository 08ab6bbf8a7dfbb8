//! Human-readable rendering with a cross-reference index.
//!
//! Anchor ids are global to the woven output: `def-<slug>` for annotations,
//! `chunk-<slug>` (and `chunk-<slug>.<k>` for later parts) for named chunks,
//! `spec-<slug>` for step specifications, `block.<d>.<i>` for unnamed
//! chunks and `sec.<d>.<anchor>` for headings of document `d`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use pulldown_cmark::{html, Options, Parser};
use serde::Serialize;

use crate::graph::{build_graph, EdgeKind};
use crate::model::{display_path, Block, Chunk, ChunkRef, DocumentSet, SourceSpan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WeaveFormat {
    Md,
    Html,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryKind {
    Annotation,
    Chunk,
    StepSpec,
}

/// One place that mentions an indexed name.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct ReferenceSite {
    pub anchor: String,
    pub from: String,
    pub location: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IndexEntry {
    pub name: String,
    pub kind: EntryKind,
    pub pattern: Option<String>,
    pub complexity: Option<String>,
    pub stability: Option<String>,
    pub defined_at: String,
    pub referenced_at: Vec<ReferenceSite>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WovenDoc {
    pub body: String,
    /// Sorted by name, one entry per name.
    pub index_entries: Vec<IndexEntry>,
}

/// Anchor-safe form of a name: ASCII alphanumerics and `-` are kept, every
/// other byte becomes `_xx`.
pub fn anchor_slug(name: &str) -> String {
    let mut out = String::new();
    for b in name.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' {
            out.push(b as char);
        } else {
            let _ = write!(out, "_{b:02x}");
        }
    }
    out
}

pub fn def_anchor(name: &str) -> String {
    format!("def-{}", anchor_slug(name))
}

pub fn spec_anchor(name: &str) -> String {
    format!("spec-{}", anchor_slug(name))
}

/// Anchor of the `part`-th (1-based) chunk named `name`.
pub fn chunk_anchor(name: &str, part: usize) -> String {
    if part == 1 {
        format!("chunk-{}", anchor_slug(name))
    } else {
        format!("chunk-{}.{part}", anchor_slug(name))
    }
}

struct Anchors {
    /// Per chunk: its anchor and (part, parts) for named chunks.
    chunks: BTreeMap<ChunkRef, (String, Option<(usize, usize)>)>,
    defined: BTreeMap<String, String>,
}

fn block_anchor(r: ChunkRef) -> String {
    format!("block.{}.{}", r.doc, r.index)
}

fn section_anchor(doc: usize, heading: &str) -> String {
    format!("sec.{doc}.{heading}")
}

fn assign_anchors(set: &DocumentSet) -> Anchors {
    let table = set.chunk_table();
    let mut chunks = BTreeMap::new();
    for (r, chunk) in set.chunks() {
        let entry = match &chunk.name {
            Some(name) => {
                let parts = &table[name];
                let part = parts.iter().position(|(p, _)| *p == r).expect("listed") + 1;
                (chunk_anchor(name, part), Some((part, parts.len())))
            }
            None => (block_anchor(r), None),
        };
        chunks.insert(r, entry);
    }
    let mut defined = BTreeMap::new();
    for spec in set.step_specs() {
        defined.insert(spec.api_name.clone(), spec_anchor(&spec.api_name));
    }
    for name in table.keys() {
        defined.insert(name.clone(), chunk_anchor(name, 1));
    }
    for a in set.annotations() {
        defined.insert(a.name.clone(), def_anchor(&a.name));
    }
    Anchors { chunks, defined }
}

fn contains(outer: &SourceSpan, inner: &SourceSpan) -> bool {
    outer.document_path == inner.document_path
        && outer.byte_start <= inner.byte_start
        && inner.byte_end <= outer.byte_end
}

/// Anchor of the innermost labelled element containing `span`.
fn site_anchor(set: &DocumentSet, anchors: &Anchors, span: &SourceSpan) -> Option<String> {
    if let Some(a) = set.annotations().find(|a| contains(&a.span, span)) {
        return Some(def_anchor(&a.name));
    }
    if let Some(s) = set.step_specs().find(|s| contains(&s.span, span)) {
        return Some(spec_anchor(&s.api_name));
    }
    if let Some((r, _)) = set.chunks().find(|(_, c)| contains(&c.span, span)) {
        return Some(anchors.chunks[&r].0.clone());
    }
    let (d, doc) = set.document(&span.document_path)?;
    let heading = doc
        .headings()
        .take_while(|h| h.span.byte_start <= span.byte_start)
        .last();
    Some(match heading {
        Some(h) => section_anchor(d, &h.anchor),
        None => format!("doc.{d}"),
    })
}

/// Builds the index rows. Every declared or textual edge into a name adds
/// a reference site, as does the step specification of that name.
pub fn index_entries(set: &DocumentSet) -> Vec<IndexEntry> {
    let anchors = assign_anchors(set);
    let graph = build_graph(set);
    let mut names: BTreeSet<String> = set.chunk_table().into_keys().collect();
    names.extend(set.annotations().map(|a| a.name.clone()));
    names.extend(set.step_specs().map(|s| s.api_name.clone()));

    names
        .into_iter()
        .map(|name| {
            let annotation = set.annotation(&name);
            let kind = if annotation.is_some() {
                EntryKind::Annotation
            } else if set
                .chunks()
                .any(|(_, c)| c.name.as_deref() == Some(name.as_str()))
            {
                EntryKind::Chunk
            } else {
                EntryKind::StepSpec
            };
            let mut referenced_at: Vec<ReferenceSite> = graph
                .edges
                .iter()
                .filter(|e| e.to.as_str() == name && e.kind != EdgeKind::Inclusion)
                .filter_map(|e| {
                    Some(ReferenceSite {
                        anchor: site_anchor(set, &anchors, &e.span)?,
                        from: e.from.to_string(),
                        location: e.span.to_string(),
                    })
                })
                .collect();
            if let Some(spec) = set.step_spec(&name) {
                referenced_at.push(ReferenceSite {
                    anchor: spec_anchor(&name),
                    from: name.clone(),
                    location: spec.span.to_string(),
                });
            }
            referenced_at.sort();
            referenced_at.dedup();
            IndexEntry {
                kind,
                pattern: annotation.and_then(|a| a.pattern.clone()),
                complexity: annotation.and_then(|a| a.complexity.clone()),
                stability: annotation.map(|a| a.stability.to_string()),
                defined_at: anchors.defined[&name].clone(),
                referenced_at,
                name,
            }
        })
        .collect()
}

fn anchor_tag(id: &str) -> String {
    format!("<a id=\"{id}\"></a>\n")
}

fn chunk_label(chunk: &Chunk, parts: Option<(usize, usize)>) -> String {
    let mut fields = Vec::new();
    match &chunk.name {
        Some(name) => fields.push(format!("Chunk `{name}`")),
        None => fields.push("Chunk".to_string()),
    }
    if let Some(target) = &chunk.file_target {
        fields.push(format!("file `{target}`"));
    }
    if let Some((k, n)) = parts {
        fields.push(format!("part {k} of {n}"));
    }
    if chunk.is_doc {
        fields.push("documentation".to_string());
    }
    format!("*{}*\n\n", fields.join(", "))
}

fn table_cell(text: &str) -> String {
    text.replace('|', "\\|")
}

fn render_markdown(set: &DocumentSet, entries: &[IndexEntry]) -> String {
    let anchors = assign_anchors(set);
    let mut out = String::new();
    for (d, doc) in set.documents.iter().enumerate() {
        if doc.raw_text.is_empty() {
            continue;
        }
        out.push_str(&anchor_tag(&format!("doc.{d}")));
        out.push('\n');
        let mut chunk_index = 0;
        for block in &doc.blocks {
            match block {
                Block::Narrative(n) => {
                    let mut offset = n.span.byte_start;
                    for line in n.markdown_text.split_inclusive('\n') {
                        let start = offset;
                        offset += line.len();
                        if let Some(h) = n.headings.iter().find(|h| h.span.byte_start == start) {
                            for spec in doc.step_specs.iter().filter(|s| s.span.byte_start == start)
                            {
                                out.push_str(&anchor_tag(&spec_anchor(&spec.api_name)));
                            }
                            out.push_str(&anchor_tag(&section_anchor(d, &h.anchor)));
                            out.push('\n');
                        }
                        let mut cursor = 0;
                        for link in doc
                            .links
                            .iter()
                            .filter(|l| l.span.byte_start >= start && l.span.byte_end <= offset)
                        {
                            let (a, b) = (link.span.byte_start - start, link.span.byte_end - start);
                            out.push_str(&line[cursor..a]);
                            match anchors.defined.get(&link.name) {
                                Some(target) => {
                                    let _ = write!(out, "[{}](#{target})", link.name);
                                }
                                None => out.push_str(&line[a..b]),
                            }
                            cursor = b;
                        }
                        out.push_str(&line[cursor..]);
                    }
                }
                Block::Chunk(chunk) => {
                    let r = ChunkRef {
                        doc: d,
                        index: chunk_index,
                    };
                    chunk_index += 1;
                    if !out.ends_with("\n\n") {
                        out.push('\n');
                    }
                    for a in doc
                        .annotations
                        .iter()
                        .filter(|a| contains(&chunk.span, &a.span))
                    {
                        out.push_str(&anchor_tag(&def_anchor(&a.name)));
                    }
                    let (anchor, parts) = &anchors.chunks[&r];
                    out.push_str(&anchor_tag(anchor));
                    out.push('\n');
                    out.push_str(&chunk_label(chunk, *parts));
                    out.push_str(&doc.raw_text[chunk.span.range()]);
                }
            }
        }
        if !out.ends_with('\n') {
            out.push('\n');
        }
    }
    if entries.is_empty() {
        return out;
    }
    if !out.is_empty() && !out.ends_with("\n\n") {
        out.push('\n');
    }
    out.push_str(&anchor_tag("index"));
    out.push_str("\n## Index\n\n");
    out.push_str("| Name | Kind | Pattern | Complexity | Stability | Defined | Referenced at |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for e in entries {
        let kind = match e.kind {
            EntryKind::Annotation => "annotation",
            EntryKind::Chunk => "chunk",
            EntryKind::StepSpec => "step-spec",
        };
        let refs: Vec<String> = e
            .referenced_at
            .iter()
            .map(|s| format!("[{} ({})](#{})", table_cell(&s.from), s.location, s.anchor))
            .collect();
        let _ = writeln!(
            out,
            "| [{name}](#{def}) | {kind} | {pattern} | {complexity} | {stability} | [{def}](#{def}) | {refs} |",
            name = table_cell(&e.name),
            def = e.defined_at,
            pattern = table_cell(e.pattern.as_deref().unwrap_or("")),
            complexity = table_cell(e.complexity.as_deref().unwrap_or("")),
            stability = e.stability.as_deref().unwrap_or(""),
            refs = refs.join(", "),
        );
    }
    out
}

fn html_escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders the set. Output is byte-deterministic.
pub fn weave(set: &DocumentSet, format: WeaveFormat) -> WovenDoc {
    let index_entries = index_entries(set);
    let markdown = render_markdown(set, &index_entries);
    let body = match format {
        WeaveFormat::Md => markdown,
        WeaveFormat::Html if markdown.is_empty() => String::new(),
        WeaveFormat::Html => {
            let title = set
                .documents
                .first()
                .map(|d| display_path(&d.path))
                .unwrap_or_default();
            let mut rendered = String::new();
            html::push_html(
                &mut rendered,
                Parser::new_ext(&markdown, Options::ENABLE_TABLES),
            );
            format!(
                "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n</head>\n<body>\n{rendered}</body>\n</html>\n",
                html_escape(&title)
            )
        }
    };
    WovenDoc {
        body,
        index_entries,
    }
}
