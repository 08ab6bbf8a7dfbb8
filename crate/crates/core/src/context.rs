//! Prompt material: budgeted context bundles, prompt templates and the
//! identifier renaming probe.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{code_spans, name_tokens, DependencyGraph, EdgeKind, NodeId};
use crate::model::{parse_reference, Chunk, Document, DocumentSet, SourceSpan};
use crate::parser::sexpr::{tokenize, TokenKind};
use crate::parser::{parse_document, ParseError};

/// Soft dependencies are followed at most this many textual hops.
pub const SOFT_DEPTH_CAP: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentRole {
    TargetAnnotation,
    StepSpec,
    HardDep,
    SoftDep,
    Narrative,
}

impl fmt::Display for SegmentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SegmentRole::TargetAnnotation => "target-annotation",
            SegmentRole::StepSpec => "step-spec",
            SegmentRole::HardDep => "hard-dep",
            SegmentRole::SoftDep => "soft-dep",
            SegmentRole::Narrative => "narrative",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub role: SegmentRole,
    pub name: String,
    pub text: String,
    pub cost: usize,
    pub source: SourceSpan,
}

/// Segments in render order: hard dependencies (dependencies first), soft
/// dependencies, narrative, the step specification, the target last.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ContextBundle {
    pub target: String,
    pub segments: Vec<Segment>,
    pub budget: usize,
    pub rendered: String,
}

impl ContextBundle {
    pub fn total_cost(&self) -> usize {
        self.segments.iter().map(|s| s.cost).sum()
    }
}

/// Token estimate: one token per four characters, rounded up.
pub fn estimate_cost(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ContextError {
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
    #[error("budget must be positive")]
    ZeroBudget,
}

/// Source text of `range` with code chunks cut out.
fn prose(doc: &Document, range: Range<usize>) -> String {
    let mut out = String::new();
    let mut cursor = range.start;
    for chunk in doc.chunks() {
        let c = chunk.span.range();
        if c.end <= range.start || c.start >= range.end {
            continue;
        }
        out.push_str(&doc.raw_text[cursor..c.start.max(cursor)]);
        cursor = c.end.min(range.end).max(cursor);
    }
    if cursor < range.end {
        out.push_str(&doc.raw_text[cursor..range.end]);
    }
    out.trim().to_string()
}

fn doc_of<'a>(set: &'a DocumentSet, span: &SourceSpan) -> &'a Document {
    set.document(&span.document_path)
        .expect("span of a loaded document")
        .1
}

fn chunk_text(chunks: &[&Chunk]) -> String {
    chunks
        .iter()
        .map(|c| c.body.join("\n"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Best description of a name: its annotation, a helper description, its
/// step specification, or its code.
fn describe(set: &DocumentSet, name: &str) -> Option<(String, SourceSpan)> {
    if let Some(a) = set.annotation(name) {
        return Some((
            doc_of(set, &a.span).raw_text[a.span.range()].to_string(),
            a.span.clone(),
        ));
    }
    if let Some(h) = set
        .step_specs()
        .flat_map(|s| &s.helpers)
        .find(|h| h.name == name)
    {
        return Some((h.text.clone(), h.span.clone()));
    }
    if let Some(s) = set.step_spec(name) {
        return Some((
            prose(doc_of(set, &s.core_span), s.core_span.range()),
            s.core_span.clone(),
        ));
    }
    let chunks: Vec<&Chunk> = set
        .chunks()
        .filter(|(_, c)| c.name.as_deref() == Some(name))
        .map(|(_, c)| c)
        .collect();
    let first = chunks.first()?;
    Some((chunk_text(&chunks), first.span.clone()))
}

fn contains(outer: &SourceSpan, inner: &SourceSpan) -> bool {
    outer.document_path == inner.document_path
        && outer.byte_start <= inner.byte_start
        && inner.byte_end <= outer.byte_end
}

/// Prose of the section enclosing the target's definition.
fn narrative_segment(set: &DocumentSet, target: &str) -> Option<(String, SourceSpan)> {
    let site = set
        .annotation(target)
        .map(|a| a.span.clone())
        .or_else(|| {
            set.chunks()
                .find(|(_, c)| c.name.as_deref() == Some(target))
                .map(|(_, c)| c.span.clone())
        })
        .or_else(|| set.step_spec(target).map(|s| s.span.clone()))?;
    let doc = doc_of(set, &site);
    let headings: Vec<_> = doc.headings().collect();
    let idx = headings
        .iter()
        .rposition(|h| h.span.byte_start <= site.byte_start)?;
    let level = headings[idx].level;
    let start = headings[idx].span.byte_start;
    let end = headings[idx + 1..]
        .iter()
        .find(|h| h.level <= level)
        .map_or(doc.raw_text.len(), |h| h.span.byte_start);
    let text = prose(doc, start..end);
    let has_prose = text
        .lines()
        .any(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    has_prose.then(|| (text, doc.span(start..end)))
}

/// Gathers descriptive segments for `target` in priority order and admits
/// each whole segment while it fits the budget.
pub fn pack_context(
    set: &DocumentSet,
    graph: &DependencyGraph,
    target: &str,
    budget: usize,
) -> Result<ContextBundle, ContextError> {
    if budget == 0 {
        return Err(ContextError::ZeroBudget);
    }
    let known = set.annotation(target).is_some()
        || set.chunks().any(|(_, c)| c.name.as_deref() == Some(target))
        || set.step_spec(target).is_some();
    if !known {
        return Err(ContextError::UnknownTarget(target.to_string()));
    }

    let mut candidates: Vec<(SegmentRole, String, String, SourceSpan)> = Vec::new();
    if let Some((text, span)) = describe(set, target) {
        candidates.push((
            SegmentRole::TargetAnnotation,
            target.to_string(),
            text,
            span,
        ));
    }
    if let Some(spec) = set.step_spec(target) {
        let text = prose(doc_of(set, &spec.core_span), spec.core_span.range());
        candidates.push((
            SegmentRole::StepSpec,
            target.to_string(),
            text,
            spec.core_span.clone(),
        ));
    }

    let mut seen: BTreeSet<NodeId> = BTreeSet::from([NodeId::from(target)]);
    if graph.contains(target) {
        let hard: BTreeSet<NodeId> = graph
            .reachable(target, &EdgeKind::HARD)
            .unwrap_or_default()
            .into_iter()
            .collect();
        let mut keep = hard.clone();
        keep.insert(NodeId::from(target));
        let sub = graph.subgraph(&keep);
        let ordered: Vec<NodeId> = match sub.topological_order(&EdgeKind::HARD) {
            Ok(order) => order.into_iter().filter(|n| hard.contains(n)).collect(),
            Err(_) => graph
                .reachable_layers(target, &EdgeKind::HARD, None)
                .unwrap_or_default()
                .into_iter()
                .rev()
                .flatten()
                .collect(),
        };
        for node in ordered {
            if let Some((text, span)) = describe(set, node.as_str()) {
                candidates.push((SegmentRole::HardDep, node.0.clone(), text, span));
            }
            seen.insert(node);
        }
        let layers = graph
            .reachable_layers(target, &[EdgeKind::Textual], Some(SOFT_DEPTH_CAP))
            .unwrap_or_default();
        for node in layers.into_iter().flatten() {
            if seen.insert(node.clone()) {
                if let Some((text, span)) = describe(set, node.as_str()) {
                    candidates.push((SegmentRole::SoftDep, node.0.clone(), text, span));
                }
            }
        }
    }
    if let Some((text, span)) = narrative_segment(set, target) {
        candidates.push((SegmentRole::Narrative, target.to_string(), text, span));
    }

    let mut admitted: Vec<Segment> = Vec::new();
    let mut remaining = budget;
    for (role, name, text, source) in candidates {
        if text.trim().is_empty() || admitted.iter().any(|s| contains(&s.source, &source)) {
            continue;
        }
        let cost = estimate_cost(&text);
        if cost <= remaining {
            remaining -= cost;
            admitted.push(Segment {
                role,
                name,
                text,
                cost,
                source,
            });
        }
    }
    let rank = |role: SegmentRole| match role {
        SegmentRole::HardDep => 0,
        SegmentRole::SoftDep => 1,
        SegmentRole::Narrative => 2,
        SegmentRole::StepSpec => 3,
        SegmentRole::TargetAnnotation => 4,
    };
    admitted.sort_by_key(|s| rank(s.role));
    let rendered = render_segments(&admitted);
    Ok(ContextBundle {
        target: target.to_string(),
        segments: admitted,
        budget,
        rendered,
    })
}

/// The `{segments}` region: each segment under a one-line header.
pub fn render_segments(segments: &[Segment]) -> String {
    let mut out = String::new();
    for s in segments {
        out.push_str(&format!(
            "--- {} `{}` ({}) ---\n{}\n\n",
            s.role, s.name, s.source, s.text
        ));
    }
    out.trim_end().to_string()
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unknown placeholder {{{0}}} in template")]
    UnknownPlaceholder(String),
    #[error("unclosed placeholder in template")]
    Unclosed,
    #[error("unknown built-in template `{0}`")]
    UnknownBuiltin(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Piece {
    Literal(String),
    Target,
    Language,
    Segments,
}

/// A prompt template with `{target}`, `{language}` and `{segments}`
/// placeholders. `{{` and `}}` stand for literal braces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Template {
    pieces: Vec<Piece>,
}

pub const STEPWISE_TEMPLATE: &str = "\
Implement `{target}` in {language}. Follow the zero-step/succ-step approach: \
the zero-step description gives the base case, the succ-step description gives \
the transition that builds each next result. The descriptions below come from \
the project document, dependencies first.

{segments}

Write `{target}` in {language}. Answer with one fenced code block.
";

pub const FULLY_BASED_TEMPLATE: &str = "\
The file:

{segments}

Fully based on the file, generate a function in {language} for {target} API mentioned in the document?
";

impl Template {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut pieces = Vec::new();
        let mut literal = String::new();
        let mut rest = text;
        while let Some(pos) = rest.find(['{', '}']) {
            literal.push_str(&rest[..pos]);
            let tail = &rest[pos..];
            if tail.starts_with("{{") || tail.starts_with("}}") {
                literal.push_str(&tail[..1]);
                rest = &tail[2..];
                continue;
            }
            if let Some(after) = tail.strip_prefix('}') {
                literal.push('}');
                rest = after;
                continue;
            }
            let close = tail.find('}').ok_or(TemplateError::Unclosed)?;
            let piece = match &tail[1..close] {
                "target" => Piece::Target,
                "language" => Piece::Language,
                "segments" => Piece::Segments,
                other => return Err(TemplateError::UnknownPlaceholder(other.to_string())),
            };
            if !literal.is_empty() {
                pieces.push(Piece::Literal(std::mem::take(&mut literal)));
            }
            pieces.push(piece);
            rest = &tail[close + 1..];
        }
        literal.push_str(rest);
        if !literal.is_empty() {
            pieces.push(Piece::Literal(literal));
        }
        Ok(Template { pieces })
    }

    /// `stepwise` or `fully-based`.
    pub fn builtin(name: &str) -> Result<Self, TemplateError> {
        match name {
            "stepwise" => Template::parse(STEPWISE_TEMPLATE),
            "fully-based" => Template::parse(FULLY_BASED_TEMPLATE),
            other => Err(TemplateError::UnknownBuiltin(other.to_string())),
        }
    }
}

pub fn render_prompt(bundle: &ContextBundle, template: &Template, language: &str) -> String {
    let mut out = String::new();
    for piece in &template.pieces {
        match piece {
            Piece::Literal(text) => out.push_str(text),
            Piece::Target => out.push_str(&bundle.target),
            Piece::Language => out.push_str(language),
            Piece::Segments => out.push_str(&bundle.rendered),
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Renaming probe

/// Name to pseudo-name pairs, in request order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RenameMapping {
    pub pairs: Vec<(String, String)>,
    pub seed: u64,
}

impl RenameMapping {
    pub fn as_map(&self) -> BTreeMap<String, String> {
        self.pairs.iter().cloned().collect()
    }

    pub fn inverse(&self) -> RenameMapping {
        RenameMapping {
            pairs: self
                .pairs
                .iter()
                .map(|(a, b)| (b.clone(), a.clone()))
                .collect(),
            seed: self.seed,
        }
    }

    /// `# seed: N` header, then `original<TAB>replacement` lines.
    pub fn to_file_text(&self) -> String {
        let mut out = format!("# seed: {}\n", self.seed);
        for (a, b) in &self.pairs {
            out.push_str(&format!("{a}\t{b}\n"));
        }
        out
    }

    pub fn parse_file(text: &str) -> Result<Self, ObfuscateError> {
        let mut mapping = RenameMapping::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if let Some(seed) = line.strip_prefix("# seed:") {
                mapping.seed = seed
                    .trim()
                    .parse()
                    .map_err(|_| ObfuscateError::BadMappingLine(i + 1))?;
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (a, b) = line
                .split_once('\t')
                .ok_or(ObfuscateError::BadMappingLine(i + 1))?;
            mapping.pairs.push((a.to_string(), b.to_string()));
        }
        Ok(mapping)
    }
}

#[derive(Debug, Error)]
pub enum ObfuscateError {
    #[error("`{0}` is not defined in the project")]
    Undefined(String),
    #[error("replacement `{replacement}` for `{name}` collides with an existing name")]
    Collision { name: String, replacement: String },
    #[error("`{0}` is listed twice")]
    Duplicate(String),
    #[error("could not generate a fresh name for `{0}`")]
    Exhausted(String),
    #[error("invalid replacement `{0}`")]
    InvalidReplacement(String),
    #[error("malformed mapping line {0}")]
    BadMappingLine(usize),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

const RESERVED: &[&str] = &[
    "define", "lambda", "let", "letrec", "begin", "cond", "else", "quote", "import", "export",
    "return", "global", "assert", "except", "finally", "continue", "nonlocal", "yield", "class",
    "while", "import", "lambda", "delete", "typeof", "switch", "struct", "static", "extern",
    "module", "public", "private", "unless", "syntax", "values",
];

fn identifier_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z_][A-Za-z0-9_]*").expect("valid regex"))
}

/// Byte ranges of identifier tokens in non-lisp code, skipping quoted
/// literals.
fn generic_identifiers(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut plain_start = 0;
    let flush = |from: usize, to: usize, out: &mut Vec<Range<usize>>| {
        for m in identifier_regex().find_iter(&text[from..to]) {
            out.push(from + m.start()..from + m.end());
        }
    };
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'"' || b == b'\'' {
            flush(plain_start, i, &mut out);
            let mut j = i + 1;
            while j < bytes.len() && bytes[j] != b && bytes[j] != b'\n' {
                j += if bytes[j] == b'\\' { 2 } else { 1 };
            }
            i = (j + 1).min(bytes.len());
            plain_start = i;
        } else if b.is_ascii_alphanumeric() || b == b'_' {
            // Skip the whole word so a quote inside it is not a literal start.
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    flush(plain_start, bytes.len(), &mut out);
    out
}

/// Renameable token ranges of one chunk body, relative to the body text,
/// plus the ranges of `<<name>>` reference names.
fn chunk_tokens(chunk: &Chunk, body: &str) -> Vec<Range<usize>> {
    let mut line_starts = vec![0];
    line_starts.extend(body.match_indices('\n').map(|(i, _)| i + 1));
    let mut reference_lines: Vec<Range<usize>> = Vec::new();
    let mut out = Vec::new();
    for (idx, line) in chunk.body.iter().enumerate() {
        if let Some((indent, name)) = parse_reference(line) {
            let start = line_starts[idx] + indent.len() + 2;
            out.push(start..start + name.len());
            reference_lines.push(line_starts[idx]..line_starts[idx] + line.len());
        }
    }
    let on_reference_line = |r: &Range<usize>| {
        reference_lines
            .iter()
            .any(|l| l.start <= r.start && r.end <= l.end)
    };
    if chunk.is_lisp() {
        if let Ok(tokens) = tokenize(body) {
            for t in tokens {
                match t.kind {
                    TokenKind::Atom if !on_reference_line(&t.span) => out.push(t.span),
                    TokenKind::Comment => out.extend(
                        name_tokens(&body[t.span.clone()])
                            .map(|(off, tok)| t.span.start + off..t.span.start + off + tok.len()),
                    ),
                    _ => {}
                }
            }
            return out;
        }
    }
    out.extend(
        generic_identifiers(body)
            .into_iter()
            .filter(|r| !on_reference_line(r)),
    );
    out
}

/// Every renameable token occurrence in a document: absolute byte range
/// and whether it sits in non-lisp code.
fn document_tokens(doc: &Document) -> Vec<(Range<usize>, bool)> {
    let mut out: Vec<(Range<usize>, bool)> = Vec::new();
    for chunk in doc.chunks() {
        let base = chunk.body_range.start;
        let body = &doc.raw_text[chunk.body_range.clone()];
        let generic = !chunk.is_lisp();
        out.extend(
            chunk_tokens(chunk, body)
                .into_iter()
                .map(|r| (base + r.start..base + r.end, generic)),
        );
        let info = &doc.raw_text[chunk.info_range.clone()];
        if let Some(name) = &chunk.name {
            if let Some(m) = chunk_value_regex()
                .captures(info)
                .and_then(|c| c.get(1).or_else(|| c.get(2)))
                .filter(|m| m.as_str() == name)
            {
                let start = chunk.info_range.start + m.start();
                out.push((start..start + m.len(), false));
            }
        }
    }
    for link in &doc.links {
        let start = link.span.byte_start + 2;
        out.push((start..link.span.byte_end - 2, false));
    }
    for heading in doc.headings() {
        let line = &doc.raw_text[heading.span.range()];
        if let Some(off) = line.rfind(heading.title.as_str()) {
            if !heading.title.contains('`') {
                let start = heading.span.byte_start + off;
                out.push((start..start + heading.title.len(), false));
            }
        }
    }
    for block in &doc.blocks {
        let crate::model::Block::Narrative(n) = block else {
            continue;
        };
        let mut offset = n.span.byte_start;
        for line in n.markdown_text.split_inclusive('\n') {
            for span in code_spans(line) {
                let base = offset + span.start;
                out.extend(
                    name_tokens(&line[span])
                        .map(|(off, tok)| (base + off..base + off + tok.len(), false)),
                );
            }
            offset += line.len();
        }
    }
    out.sort_by_key(|(r, _)| (r.start, r.end));
    // Links inside code spans would be counted twice.
    out.dedup_by(|b, a| a.0 == b.0);
    out
}

fn chunk_value_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"(?:^|\s)chunk=(?:"([^"]*)"|([^\s"]+))"#).expect("valid regex"))
}

/// Names that may be renamed: chunk, annotation and step-spec names plus
/// every symbol used in code.
pub fn renameable_names(set: &DocumentSet) -> BTreeSet<String> {
    let mut names = set.defined_names();
    for doc in &set.documents {
        for chunk in doc.chunks() {
            let body = &doc.raw_text[chunk.body_range.clone()];
            for r in chunk_tokens(chunk, body) {
                names.insert(body[r].to_string());
            }
        }
    }
    names
}

fn all_tokens(set: &DocumentSet) -> BTreeSet<String> {
    let mut tokens = BTreeSet::new();
    for doc in &set.documents {
        tokens.extend(name_tokens(&doc.raw_text).map(|(_, t)| t.to_string()));
        tokens.extend(
            identifier_regex()
                .find_iter(&doc.raw_text)
                .map(|m| m.as_str().to_string()),
        );
    }
    tokens
}

/// Renames every token occurrence in the set according to `mapping`.
pub fn apply_mapping(
    set: &DocumentSet,
    mapping: &RenameMapping,
) -> Result<DocumentSet, ObfuscateError> {
    let map = mapping.as_map();
    if map.is_empty() {
        return Ok(set.clone());
    }
    let mut documents = Vec::with_capacity(set.documents.len());
    for doc in &set.documents {
        let mut text = String::with_capacity(doc.raw_text.len());
        let mut cursor = 0;
        for (range, _) in document_tokens(doc) {
            if range.start < cursor {
                continue;
            }
            if let Some(replacement) = map.get(&doc.raw_text[range.clone()]) {
                text.push_str(&doc.raw_text[cursor..range.start]);
                text.push_str(replacement);
                cursor = range.end;
            }
        }
        text.push_str(&doc.raw_text[cursor..]);
        documents.push(if text == doc.raw_text {
            doc.clone()
        } else {
            parse_document(&doc.path, &text)?
        });
    }
    Ok(DocumentSet::new(documents))
}

fn generic_usage(set: &DocumentSet) -> BTreeSet<String> {
    let mut names = BTreeSet::new();
    for doc in &set.documents {
        for (r, generic) in document_tokens(doc) {
            if generic {
                names.insert(doc.raw_text[r].to_string());
            }
        }
    }
    names
}

fn pseudo_name(rng: &mut ChaCha8Rng, hyphen: bool) -> String {
    const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    let len = rng.random_range(6..=10);
    let mut name = String::with_capacity(len);
    for i in 0..len {
        let inner = i > 0 && i + 1 < len && !name.ends_with('-');
        if hyphen && inner && rng.random_ratio(1, 6) {
            name.push('-');
        } else {
            name.push(LETTERS[rng.random_range(0..LETTERS.len())] as char);
        }
    }
    name
}

const MAX_ATTEMPTS: usize = 64;

/// Renames each name to a fresh pseudo-name derived from `seed`, or to the
/// given replacement.
pub fn obfuscate_with(
    set: &DocumentSet,
    requests: &[(String, Option<String>)],
    seed: u64,
) -> Result<(DocumentSet, RenameMapping), ObfuscateError> {
    let defined = renameable_names(set);
    let mut taken = all_tokens(set);
    taken.extend(RESERVED.iter().map(|s| s.to_string()));
    let generic = generic_usage(set);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mapping = RenameMapping {
        pairs: Vec::new(),
        seed,
    };
    let mut listed = BTreeSet::new();
    for (name, explicit) in requests {
        if !defined.contains(name) {
            return Err(ObfuscateError::Undefined(name.clone()));
        }
        if !listed.insert(name.clone()) {
            return Err(ObfuscateError::Duplicate(name.clone()));
        }
        let replacement = match explicit {
            Some(r) => {
                if r.is_empty() || !r.chars().all(crate::graph::is_name_char) {
                    return Err(ObfuscateError::InvalidReplacement(r.clone()));
                }
                if taken.contains(r) {
                    return Err(ObfuscateError::Collision {
                        name: name.clone(),
                        replacement: r.clone(),
                    });
                }
                r.clone()
            }
            None => (0..MAX_ATTEMPTS)
                .map(|_| pseudo_name(&mut rng, !generic.contains(name)))
                .find(|candidate| !taken.contains(candidate))
                .ok_or_else(|| ObfuscateError::Exhausted(name.clone()))?,
        };
        taken.insert(replacement.clone());
        mapping.pairs.push((name.clone(), replacement));
    }
    let renamed = apply_mapping(set, &mapping)?;
    Ok((renamed, mapping))
}

/// Renames each listed name to a generated pseudo-name.
pub fn obfuscate(
    set: &DocumentSet,
    names: &[String],
    seed: u64,
) -> Result<(DocumentSet, RenameMapping), ObfuscateError> {
    let requests: Vec<(String, Option<String>)> = names.iter().map(|n| (n.clone(), None)).collect();
    obfuscate_with(set, &requests, seed)
}
