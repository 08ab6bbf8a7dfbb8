//! In-memory representation of ILP documents.
//!
//! Documents are immutable after parsing. Every edit performed by the
//! toolchain (detangle, obfuscation, merge-back) splices the raw text and
//! re-parses, so the block structure always mirrors `raw_text` exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::parser::sexpr::{self, Datum, SyntaxNode};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SourceSpan {
    pub document_path: PathBuf,
    pub byte_start: usize,
    pub byte_end: usize,
    /// 1-based line of `byte_start`.
    pub line_start: usize,
}

impl SourceSpan {
    pub fn range(&self) -> Range<usize> {
        self.byte_start..self.byte_end
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}",
            display_path(&self.document_path),
            self.line_start
        )
    }
}

/// Forward-slash rendering of a relative path, stable across platforms.
pub fn display_path(path: &Path) -> String {
    path.components()
        .map(|c| match c {
            std::path::Component::RootDir => "".into(),
            other => other.as_os_str().to_string_lossy(),
        })
        .collect::<Vec<_>>()
        .join("/")
}

/// Byte offset to line number lookup for one text.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    pub fn new(text: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(text.match_indices('\n').map(|(i, _)| i + 1));
        LineIndex { starts }
    }

    /// 1-based line containing `offset`.
    pub fn line_of(&self, offset: usize) -> usize {
        match self.starts.binary_search(&offset) {
            Ok(i) => i + 1,
            Err(i) => i,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Diagnostic {
    pub path: PathBuf,
    pub byte_offset: usize,
    pub line: usize,
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    pub fn new(severity: Severity, span: &SourceSpan, message: impl Into<String>) -> Self {
        Diagnostic {
            path: span.document_path.clone(),
            byte_offset: span.byte_start,
            line: span.line_start,
            severity,
            message: message.into(),
        }
    }

    pub fn error(span: &SourceSpan, message: impl Into<String>) -> Self {
        Self::new(Severity::Error, span, message)
    }

    pub fn warning(span: &SourceSpan, message: impl Into<String>) -> Self {
        Self::new(Severity::Warning, span, message)
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {}: {}",
            display_path(&self.path),
            self.line,
            self.severity,
            self.message
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Heading {
    pub level: u8,
    pub title: String,
    /// Unique within the document.
    pub anchor: String,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Narrative {
    pub markdown_text: String,
    pub headings: Vec<Heading>,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chunk {
    pub name: Option<String>,
    pub language: String,
    pub file_target: Option<String>,
    /// Info-string keys other than `file` and `chunk`; flags map to "".
    pub attributes: BTreeMap<String, String>,
    pub body: Vec<String>,
    pub is_doc: bool,
    /// Whole fenced block, fences included.
    pub span: SourceSpan,
    /// Bytes of the body lines (between the fences).
    pub body_range: Range<usize>,
    /// Byte range of the info string on the opening fence line.
    pub info_range: Range<usize>,
}

impl Chunk {
    /// Whether the chunk contributes to tangled output.
    pub fn is_tangleable(&self) -> bool {
        match self.attributes.get("tangle").map(String::as_str) {
            Some("true") => true,
            Some("false") => false,
            _ => !self.is_doc,
        }
    }

    pub fn is_lisp(&self) -> bool {
        is_lisp_language(&self.language)
    }

    /// Whole-line `<<name>>` references: (line index, indent, name).
    pub fn references(&self) -> Vec<(usize, &str, &str)> {
        self.body
            .iter()
            .enumerate()
            .filter_map(|(i, line)| parse_reference(line).map(|(indent, name)| (i, indent, name)))
            .collect()
    }

    /// Names bound by top-level `define` forms in the body.
    pub fn defined_procedures(&self) -> Vec<String> {
        if !self.is_lisp() {
            return Vec::new();
        }
        let text = self.body.join("\n");
        let Ok(forms) = sexpr::read_all(&text) else {
            return Vec::new();
        };
        forms
            .iter()
            .filter_map(|form| {
                let items = form.list_items()?;
                if !items.first()?.atom()?.is_symbol("define") {
                    return None;
                }
                match &items.get(1)?.node {
                    SyntaxNode::Atom(Datum::Symbol(name)) => Some(name.clone()),
                    SyntaxNode::List(sig) => sig.first()?.atom()?.as_symbol().map(str::to_string),
                    _ => None,
                }
            })
            .collect()
    }
}

pub fn is_lisp_language(language: &str) -> bool {
    matches!(
        language.to_ascii_lowercase().as_str(),
        "scheme" | "scm" | "lisp" | "racket" | "goldfish" | "s7" | "elisp" | "clojure"
    )
}

/// Parses a line of the form `<indent><<name>>`.
pub fn parse_reference(line: &str) -> Option<(&str, &str)> {
    let trimmed = line.trim_start();
    let indent = &line[..line.len() - trimmed.len()];
    let name = trimmed.trim_end().strip_prefix("<<")?.strip_suffix(">>")?;
    if name.is_empty() || name.contains("<<") || name.contains(">>") {
        return None;
    }
    Some((indent, name))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Block {
    Narrative(Narrative),
    Chunk(Chunk),
}

impl Block {
    pub fn span(&self) -> &SourceSpan {
        match self {
            Block::Narrative(n) => &n.span,
            Block::Chunk(c) => &c.span,
        }
    }
}

/// A `[[name]]` cross-reference in narrative.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Link {
    pub name: String,
    pub span: SourceSpan,
}

/// A `### Helper Function: `name`` sub-section of a step specification.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HelperDescription {
    pub name: String,
    pub text: String,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepSpec {
    pub api_name: String,
    pub zero_step: String,
    pub succ_step: String,
    pub helper_refs: Vec<String>,
    pub helpers: Vec<HelperDescription>,
    /// From the `##` heading to the end of the section.
    pub span: SourceSpan,
    /// Heading plus the zero-step and succ-step sub-sections.
    pub core_span: SourceSpan,
    pub heading_anchor: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Unspecified,
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Unspecified => "unspecified",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExampleCase {
    pub input_expr: Datum,
    pub expected: Datum,
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Annotation {
    pub name: String,
    pub pattern: Option<String>,
    pub complexity: Option<String>,
    pub stability: Stability,
    pub examples: Vec<ExampleCase>,
    pub depends: Vec<String>,
    pub body: Option<Datum>,
    /// Unrecognized keyword arguments, preserved verbatim.
    pub extra: BTreeMap<String, Datum>,
    /// The whole `(define-with-docs ...)` form.
    pub span: SourceSpan,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub path: PathBuf,
    pub blocks: Vec<Block>,
    pub raw_text: String,
    pub step_specs: Vec<StepSpec>,
    pub annotations: Vec<Annotation>,
    pub links: Vec<Link>,
    /// Findings made while parsing (annotation warnings and the like).
    pub diagnostics: Vec<Diagnostic>,
    pub lines: LineIndex,
}

impl Document {
    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.blocks.iter().filter_map(|b| match b {
            Block::Chunk(c) => Some(c),
            Block::Narrative(_) => None,
        })
    }

    pub fn headings(&self) -> impl Iterator<Item = &Heading> {
        self.blocks.iter().flat_map(|b| match b {
            Block::Narrative(n) => n.headings.as_slice(),
            Block::Chunk(_) => &[],
        })
    }

    /// Reassembles the source from the block slices.
    pub fn serialize(&self) -> String {
        self.blocks
            .iter()
            .map(|b| &self.raw_text[b.span().range()])
            .collect()
    }

    pub fn chunk_table(&self) -> BTreeMap<String, Vec<&Chunk>> {
        let mut table: BTreeMap<String, Vec<&Chunk>> = BTreeMap::new();
        for chunk in self.chunks() {
            if let Some(name) = &chunk.name {
                table.entry(name.clone()).or_default().push(chunk);
            }
        }
        table
    }

    pub fn span(&self, range: Range<usize>) -> SourceSpan {
        SourceSpan {
            document_path: self.path.clone(),
            line_start: self.lines.line_of(range.start),
            byte_start: range.start,
            byte_end: range.end,
        }
    }
}

/// Location of a chunk inside a [`DocumentSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChunkRef {
    pub doc: usize,
    /// Index among the chunks of that document.
    pub index: usize,
}

/// The documents of one project, in configured document order. Chunks of
/// all documents form one stream in that order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DocumentSet {
    pub documents: Vec<Document>,
}

impl DocumentSet {
    pub fn new(documents: Vec<Document>) -> Self {
        DocumentSet { documents }
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn chunks(&self) -> impl Iterator<Item = (ChunkRef, &Chunk)> {
        self.documents.iter().enumerate().flat_map(|(doc, d)| {
            d.chunks()
                .enumerate()
                .map(move |(index, c)| (ChunkRef { doc, index }, c))
        })
    }

    pub fn chunk(&self, r: ChunkRef) -> &Chunk {
        self.documents[r.doc]
            .chunks()
            .nth(r.index)
            .expect("valid chunk reference")
    }

    pub fn annotations(&self) -> impl Iterator<Item = &Annotation> {
        self.documents.iter().flat_map(|d| d.annotations.iter())
    }

    pub fn annotation(&self, name: &str) -> Option<&Annotation> {
        self.annotations().find(|a| a.name == name)
    }

    pub fn step_specs(&self) -> impl Iterator<Item = &StepSpec> {
        self.documents.iter().flat_map(|d| d.step_specs.iter())
    }

    pub fn step_spec(&self, name: &str) -> Option<&StepSpec> {
        self.step_specs().find(|s| s.api_name == name)
    }

    pub fn document(&self, path: &Path) -> Option<(usize, &Document)> {
        self.documents
            .iter()
            .enumerate()
            .find(|(_, d)| d.path == path)
    }

    /// Named chunks across the set, continuations in stream order.
    pub fn chunk_table(&self) -> BTreeMap<String, Vec<(ChunkRef, &Chunk)>> {
        let mut table: BTreeMap<String, Vec<(ChunkRef, &Chunk)>> = BTreeMap::new();
        for (r, chunk) in self.chunks() {
            if let Some(name) = &chunk.name {
                table.entry(name.clone()).or_default().push((r, chunk));
            }
        }
        table
    }

    /// Every chunk, annotation and step-spec name.
    pub fn defined_names(&self) -> BTreeSet<String> {
        let mut names: BTreeSet<String> =
            self.chunks().filter_map(|(_, c)| c.name.clone()).collect();
        names.extend(self.annotations().map(|a| a.name.clone()));
        names.extend(self.step_specs().map(|s| s.api_name.clone()));
        names
    }

    /// Chunk id used in tangle markers: the chunk name, or `anon-<n>` for
    /// the n-th unnamed targeted chunk of the set.
    pub fn chunk_id(&self, target: ChunkRef) -> String {
        let chunk = self.chunk(target);
        if let Some(name) = &chunk.name {
            return name.clone();
        }
        let n = self
            .chunks()
            .filter(|(_, c)| c.name.is_none() && c.file_target.is_some())
            .take_while(|(r, _)| *r != target)
            .count();
        format!("anon-{}", n + 1)
    }
}
