//! Chunk expansion, file export, drift detection and the reverse edit path.
//!
//! Marker lines have the exact shape
//! `<leader> ILP:BEGIN <chunk-id> <doc-path>:<line>` and
//! `<leader> ILP:END <chunk-id>`. Every chunk contribution is wrapped,
//! nested inclusions too, so a marked file is a tree of regions that maps
//! back onto chunks without guessing.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::ops::Range;
use std::path::{Component, Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::Serialize;
use thiserror::Error;

use crate::model::{
    display_path, is_lisp_language, parse_reference, Chunk, ChunkRef, Diagnostic, DocumentSet,
    SourceSpan,
};
use crate::parser::parse_document;

/// Name of the file listing tangled paths, kept in the output root.
pub const MANIFEST_NAME: &str = ".ilp-manifest";

#[derive(Debug, Error)]
pub enum TangleError {
    #[error("{span}: unresolved chunk reference <<{name}>>")]
    Unresolved { name: String, span: SourceSpan },
    #[error("chunk inclusion cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("{span}: file target `{target}` escapes the output root")]
    PathEscape { target: String, span: SourceSpan },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> TangleError + '_ {
    move |source| TangleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Line-comment leader for a chunk language, and whether it was known.
pub fn comment_leader(language: &str) -> (&'static str, bool) {
    let lang = language.to_ascii_lowercase();
    if is_lisp_language(&lang) {
        return (";;", true);
    }
    match lang.as_str() {
        "python" | "py" | "sh" | "bash" | "shell" | "zsh" | "ruby" | "rb" | "perl" | "r"
        | "yaml" | "yml" | "toml" | "make" | "makefile" | "dockerfile" | "nix" | "julia"
        | "cmake" | "tcl" => ("#", true),
        "sql" | "haskell" | "hs" | "lua" | "elm" | "ada" => ("--", true),
        "c" | "cpp" | "c++" | "h" | "hpp" | "rust" | "rs" | "java" | "javascript" | "js"
        | "typescript" | "ts" | "go" | "swift" | "kotlin" | "scala" | "csharp" | "cs" | "dart"
        | "zig" | "php" | "groovy" => ("//", true),
        _ => ("//", false),
    }
}

/// Normalized relative form of a file target, or `None` if it leaves the
/// root. `./a/../b.scm` becomes `b.scm`.
pub fn normalize_target(target: &str) -> Option<String> {
    let path = Path::new(target);
    let mut parts: Vec<String> = Vec::new();
    for component in path.components() {
        match component {
            Component::Normal(p) => parts.push(p.to_string_lossy().into_owned()),
            Component::CurDir => {}
            Component::ParentDir => {
                parts.pop()?;
            }
            Component::RootDir | Component::Prefix(_) => return None,
        }
    }
    if parts.is_empty() || target.starts_with('\\') {
        return None;
    }
    Some(parts.join("/"))
}

/// Tangleable chunks by name, continuations in stream order.
#[derive(Clone, Debug)]
pub struct ChunkTable<'a> {
    set: &'a DocumentSet,
    by_name: BTreeMap<String, Vec<ChunkRef>>,
}

impl<'a> ChunkTable<'a> {
    pub fn new(set: &'a DocumentSet) -> Self {
        let mut by_name: BTreeMap<String, Vec<ChunkRef>> = BTreeMap::new();
        for (r, chunk) in set.chunks() {
            if let (Some(name), true) = (&chunk.name, chunk.is_tangleable()) {
                by_name.entry(name.clone()).or_default().push(r);
            }
        }
        ChunkTable { set, by_name }
    }

    pub fn get(&self, name: &str) -> Option<&[ChunkRef]> {
        self.by_name.get(name).map(Vec::as_slice)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }
}

/// One produced line and the chunk it came from.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Line {
    text: String,
    origin: ChunkRef,
    is_marker: bool,
}

struct Expander<'t, 'a> {
    table: &'t ChunkTable<'a>,
    markers: bool,
    stack: Vec<String>,
    unknown_languages: BTreeSet<String>,
}

impl Expander<'_, '_> {
    fn marker_pair(&mut self, r: ChunkRef) -> (String, String) {
        let set = self.table.set;
        let chunk = set.chunk(r);
        let (leader, known) = comment_leader(&chunk.language);
        if !known {
            self.unknown_languages.insert(chunk.language.clone());
        }
        let id = set.chunk_id(r);
        let doc = display_path(&set.documents[r.doc].path);
        (
            format!("{leader} ILP:BEGIN {id} {doc}:{}", chunk.span.line_start),
            format!("{leader} ILP:END {id}"),
        )
    }

    fn expand_one(
        &mut self,
        r: ChunkRef,
        indent: &str,
        out: &mut Vec<Line>,
    ) -> Result<(), TangleError> {
        let chunk = self.table.set.chunk(r);
        let markers = self.markers.then(|| self.marker_pair(r));
        if let Some((begin, _)) = &markers {
            out.push(Line {
                text: format!("{indent}{begin}"),
                origin: r,
                is_marker: true,
            });
        }
        for line in &chunk.body {
            match parse_reference(line) {
                Some((inner, name)) => {
                    let nested = format!("{indent}{inner}");
                    self.expand_name(name, &nested, out).map_err(|e| match e {
                        TangleError::Unresolved { name, .. } => TangleError::Unresolved {
                            name,
                            span: chunk.span.clone(),
                        },
                        other => other,
                    })?;
                }
                None => out.push(Line {
                    text: format!("{indent}{line}"),
                    origin: r,
                    is_marker: false,
                }),
            }
        }
        if let Some((_, end)) = markers {
            out.push(Line {
                text: format!("{indent}{end}"),
                origin: r,
                is_marker: true,
            });
        }
        Ok(())
    }

    fn expand_name(
        &mut self,
        name: &str,
        indent: &str,
        out: &mut Vec<Line>,
    ) -> Result<(), TangleError> {
        if let Some(pos) = self.stack.iter().position(|n| n == name) {
            let mut cycle = self.stack[pos..].to_vec();
            cycle.push(name.to_string());
            return Err(TangleError::Cycle(cycle));
        }
        let Some(refs) = self.table.get(name) else {
            return Err(TangleError::Unresolved {
                name: name.to_string(),
                span: SourceSpan {
                    document_path: PathBuf::new(),
                    byte_start: 0,
                    byte_end: 0,
                    line_start: 0,
                },
            });
        };
        self.stack.push(name.to_string());
        for &r in refs {
            self.expand_one(r, indent, out)?;
        }
        self.stack.pop();
        Ok(())
    }
}

/// Expansion of every chunk named `name`, continuations in document order,
/// with `<indent><<other>>` lines replaced by the expansion of `other`
/// prefixed line by line with `<indent>`.
pub fn expand_chunk(table: &ChunkTable, name: &str) -> Result<Vec<String>, TangleError> {
    let mut expander = Expander {
        table,
        markers: false,
        stack: Vec::new(),
        unknown_languages: BTreeSet::new(),
    };
    let mut out = Vec::new();
    expander.expand_name(name, "", &mut out)?;
    Ok(out.into_iter().map(|l| l.text).collect())
}

/// A run of output lines attributed to one chunk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub path: String,
    /// 1-based, end exclusive.
    pub lines: Range<usize>,
    pub chunk_id: String,
    pub chunk_span: SourceSpan,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TangleOutput {
    /// Normalized relative path to file text.
    pub files: BTreeMap<String, String>,
    pub provenance: Vec<Provenance>,
    pub markers: bool,
    pub warnings: Vec<Diagnostic>,
}

/// Chunks contributing to each output file, in stream order. A named chunk
/// without a target inherits the target of its first targeted namesake.
pub fn file_assignments(set: &DocumentSet) -> Result<BTreeMap<String, Vec<ChunkRef>>, TangleError> {
    let mut inherited: BTreeMap<&str, &str> = BTreeMap::new();
    for (_, chunk) in set.chunks() {
        if let (Some(name), Some(target), true) =
            (&chunk.name, &chunk.file_target, chunk.is_tangleable())
        {
            inherited.entry(name).or_insert(target);
        }
    }
    let mut files: BTreeMap<String, Vec<ChunkRef>> = BTreeMap::new();
    for (r, chunk) in set.chunks() {
        if !chunk.is_tangleable() {
            continue;
        }
        let target = chunk.file_target.as_deref().or_else(|| {
            chunk
                .name
                .as_deref()
                .and_then(|n| inherited.get(n).copied())
        });
        let Some(target) = target else { continue };
        let key = normalize_target(target).ok_or_else(|| TangleError::PathEscape {
            target: target.to_string(),
            span: chunk.span.clone(),
        })?;
        files.entry(key).or_default().push(r);
    }
    Ok(files)
}

fn finish_file(mut lines: Vec<Line>) -> Vec<Line> {
    while lines.last().is_some_and(|l| l.text.trim().is_empty()) {
        lines.pop();
    }
    lines
}

fn join_lines<'a>(lines: impl Iterator<Item = &'a str>) -> String {
    let mut text = String::new();
    for line in lines {
        text.push_str(line);
        text.push('\n');
    }
    text
}

/// Pure export: the text of every output file.
pub fn tangle(set: &DocumentSet, markers: bool) -> Result<TangleOutput, TangleError> {
    let table = ChunkTable::new(set);
    let assignments = file_assignments(set)?;
    let mut expander = Expander {
        table: &table,
        markers,
        stack: Vec::new(),
        unknown_languages: BTreeSet::new(),
    };
    let mut output = TangleOutput {
        markers,
        ..TangleOutput::default()
    };
    for (path, refs) in &assignments {
        let mut lines = Vec::new();
        for &r in refs {
            let chunk = set.chunk(r);
            expander.stack = chunk.name.iter().cloned().collect();
            expander.expand_one(r, "", &mut lines)?;
        }
        let lines = finish_file(lines);
        let mut start = 0;
        while start < lines.len() {
            let origin = lines[start].origin;
            let end = (start..lines.len())
                .find(|&i| lines[i].origin != origin)
                .unwrap_or(lines.len());
            output.provenance.push(Provenance {
                path: path.clone(),
                lines: start + 1..end + 1,
                chunk_id: set.chunk_id(origin),
                chunk_span: set.chunk(origin).span.clone(),
            });
            start = end;
        }
        output.files.insert(
            path.clone(),
            join_lines(lines.iter().map(|l| l.text.as_str())),
        );
    }
    for lang in &expander.unknown_languages {
        let (r, chunk) = set
            .chunks()
            .find(|(_, c)| &c.language == lang)
            .expect("language seen during expansion");
        let _ = r;
        output.warnings.push(Diagnostic::warning(
            &chunk.span,
            format!("no comment leader known for language `{lang}`; using `//`"),
        ));
    }
    Ok(output)
}

/// Whether a line is a marker line, whatever its leader or indentation.
pub fn is_marker_line(line: &str) -> bool {
    marker_regex().is_match(line.trim())
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(\S+) ILP:(?:BEGIN (.+) (\S+):(\d+)|END (.+))$").expect("valid regex")
    })
}

/// Drops marker lines and applies the trailing-newline rule of tangled
/// files. Stripping a marked export gives the unmarked export.
pub fn strip_markers(text: &str) -> String {
    let mut lines: Vec<&str> = text.lines().filter(|l| !is_marker_line(l)).collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    join_lines(lines.into_iter())
}

/// Outcome of writing a [`TangleOutput`] to disk.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WriteReport {
    pub written: Vec<String>,
    pub unchanged: Vec<String>,
}

fn manifest_text(output: &TangleOutput) -> String {
    let mut text = format!(
        "# ilp-forge tangle manifest\n# markers: {}\n",
        output.markers
    );
    for path in output.files.keys() {
        text.push_str(path);
        text.push('\n');
    }
    text
}

/// Paths and marker mode recorded by the last write, if any.
pub fn read_manifest(out_root: &Path) -> Result<Option<(Vec<String>, bool)>, TangleError> {
    let path = out_root.join(MANIFEST_NAME);
    let text = match fs::read_to_string(&path) {
        Ok(text) => text,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io_error(&path)(e)),
    };
    let markers = text.lines().any(|l| l.trim() == "# markers: true");
    let files = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(str::to_string)
        .collect();
    Ok(Some((files, markers)))
}

fn write_if_changed(path: &Path, text: &str) -> Result<bool, TangleError> {
    if fs::read(path).is_ok_and(|old| old == text.as_bytes()) {
        return Ok(false);
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_error(parent))?;
    }
    fs::write(path, text).map_err(io_error(path))?;
    Ok(true)
}

/// Writes every file whose on-disk bytes differ, plus the manifest.
pub fn write_output(output: &TangleOutput, out_root: &Path) -> Result<WriteReport, TangleError> {
    let mut report = WriteReport::default();
    for (rel, text) in &output.files {
        if normalize_target(rel).as_deref() != Some(rel.as_str()) {
            return Err(TangleError::PathEscape {
                target: rel.clone(),
                span: SourceSpan {
                    document_path: PathBuf::from(rel),
                    byte_start: 0,
                    byte_end: 0,
                    line_start: 0,
                },
            });
        }
        if write_if_changed(&out_root.join(rel), text)? {
            report.written.push(rel.clone());
        } else {
            report.unchanged.push(rel.clone());
        }
    }
    write_if_changed(&out_root.join(MANIFEST_NAME), &manifest_text(output))?;
    Ok(report)
}

/// Expands the set and writes the result under `out_root`.
pub fn tangle_project(
    set: &DocumentSet,
    out_root: &Path,
    markers: bool,
) -> Result<(TangleOutput, WriteReport), TangleError> {
    let output = tangle(set, markers)?;
    let report = write_output(&output, out_root)?;
    Ok((output, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum DriftStatus {
    InSync,
    Modified { first_differing_line: usize },
    Missing,
    Extra,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DriftReport {
    pub path: String,
    #[serde(flatten)]
    pub status: DriftStatus,
}

/// 1-based number of the first line where the texts differ.
pub fn first_differing_line(a: &str, b: &str) -> Option<usize> {
    if a == b {
        return None;
    }
    let mut left = a.split('\n');
    let mut right = b.split('\n');
    let mut n = 1;
    loop {
        match (left.next(), right.next()) {
            (Some(x), Some(y)) if x == y => n += 1,
            _ => return Some(n),
        }
    }
}

/// Compares the expected export with the files under `out_root`. The
/// marker mode is taken from the manifest when one exists.
pub fn check_drift(set: &DocumentSet, out_root: &Path) -> Result<Vec<DriftReport>, TangleError> {
    let manifest = read_manifest(out_root)?;
    let markers = manifest.as_ref().is_some_and(|(_, m)| *m);
    let output = tangle(set, markers)?;
    let mut reports = Vec::new();
    for (rel, expected) in &output.files {
        let path = out_root.join(rel);
        let status = match fs::read(&path) {
            Ok(bytes) if bytes == expected.as_bytes() => DriftStatus::InSync,
            Ok(bytes) => DriftStatus::Modified {
                first_differing_line: first_differing_line(
                    expected,
                    &String::from_utf8_lossy(&bytes),
                )
                .unwrap_or(1),
            },
            Err(e) if e.kind() == io::ErrorKind::NotFound => DriftStatus::Missing,
            Err(e) => return Err(io_error(&path)(e)),
        };
        reports.push(DriftReport {
            path: rel.clone(),
            status,
        });
    }
    if let Some((listed, _)) = manifest {
        for rel in listed {
            if !output.files.contains_key(&rel) && out_root.join(&rel).exists() {
                reports.push(DriftReport {
                    path: rel,
                    status: DriftStatus::Extra,
                });
            }
        }
    }
    reports.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(reports)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DetangleErrorKind {
    DamagedMarker,
    Unbalanced,
    OutsideRegion,
    UnknownChunk,
    AmbiguousEdit,
    FenceInBody,
    Unparsable,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{path}:{line}: error: {message}")]
pub struct DetangleError {
    pub path: String,
    pub line: usize,
    pub kind: DetangleErrorKind,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum DetangleFailure {
    #[error(transparent)]
    Tangle(#[from] TangleError),
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Refused(Vec<DetangleError>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Node {
    Text { line: usize, text: String },
    Region(Region),
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Region {
    indent: String,
    id: String,
    doc: String,
    fence_line: usize,
    begin_line: usize,
    /// Verbatim file lines from BEGIN to END inclusive.
    raw: Vec<String>,
    children: Vec<Node>,
}

fn parse_regions(path: &str, text: &str) -> Result<Vec<Node>, DetangleError> {
    let refuse = |line: usize, kind, message: String| DetangleError {
        path: path.to_string(),
        line,
        kind,
        message,
    };
    let mut stack: Vec<Region> = Vec::new();
    let mut top: Vec<Node> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let trimmed = line.trim();
        for open in &mut stack {
            open.raw.push(line.to_string());
        }
        if !(trimmed.contains("ILP:BEGIN") || trimmed.contains("ILP:END")) {
            let node = Node::Text {
                line: n,
                text: line.to_string(),
            };
            match stack.last_mut() {
                Some(open) => open.children.push(node),
                None => top.push(node),
            }
            continue;
        }
        let caps = marker_regex().captures(trimmed).ok_or_else(|| {
            refuse(
                n,
                DetangleErrorKind::DamagedMarker,
                format!("damaged marker line `{trimmed}`"),
            )
        })?;
        let indent = line[..line.len() - line.trim_start().len()].to_string();
        if let Some(id) = caps.get(2) {
            stack.push(Region {
                indent,
                id: id.as_str().to_string(),
                doc: caps[3].to_string(),
                fence_line: caps[4].parse().map_err(|_| {
                    refuse(
                        n,
                        DetangleErrorKind::DamagedMarker,
                        "bad line number in marker".into(),
                    )
                })?,
                begin_line: n,
                raw: vec![line.to_string()],
                children: Vec::new(),
            });
            continue;
        }
        let id = &caps[5];
        let Some(region) = stack.pop() else {
            return Err(refuse(
                n,
                DetangleErrorKind::Unbalanced,
                format!("END for `{id}` without BEGIN"),
            ));
        };
        if region.id != id || region.indent != indent {
            return Err(refuse(
                n,
                DetangleErrorKind::Unbalanced,
                format!(
                    "END for `{id}` does not close `{}` opened at line {}",
                    region.id, region.begin_line
                ),
            ));
        }
        match stack.last_mut() {
            Some(open) => open.children.push(Node::Region(region)),
            None => top.push(Node::Region(region)),
        }
    }
    if let Some(open) = stack.last() {
        return Err(refuse(
            open.begin_line,
            DetangleErrorKind::Unbalanced,
            format!("region `{}` is never closed", open.id),
        ));
    }
    Ok(top)
}

fn blank_equal(a: &str, b: &str) -> bool {
    a == b || (a.trim().is_empty() && b.trim().is_empty())
}

fn strip_indent<'s>(line: &'s str, indent: &str) -> Option<&'s str> {
    match line.strip_prefix(indent) {
        Some(rest) => Some(rest),
        None if line.trim().is_empty() => Some(""),
        None => None,
    }
}

struct Rebuilder<'t, 'a> {
    table: &'t ChunkTable<'a>,
    path: &'t str,
}

impl Rebuilder<'_, '_> {
    fn refuse(&self, line: usize, kind: DetangleErrorKind, message: String) -> DetangleError {
        DetangleError {
            path: self.path.to_string(),
            line,
            kind,
            message,
        }
    }

    /// Body lines of the chunk owning `region`, with nested inclusion runs
    /// folded back into references.
    fn rebuild(&self, region: &Region) -> Result<Vec<String>, DetangleError> {
        let mut body = Vec::new();
        let mut i = 0;
        let children = &region.children;
        while i < children.len() {
            match &children[i] {
                Node::Text { line, text } => {
                    let stripped = strip_indent(text, &region.indent).ok_or_else(|| {
                        self.refuse(
                            *line,
                            DetangleErrorKind::OutsideRegion,
                            format!("line is less indented than region `{}`", region.id),
                        )
                    })?;
                    body.push(stripped.to_string());
                    i += 1;
                }
                Node::Region(nested) => {
                    let name = &nested.id;
                    let count = self.table.get(name).map_or(0, <[ChunkRef]>::len);
                    let run: Vec<&Region> = children[i..]
                        .iter()
                        .take(count)
                        .map_while(|c| match c {
                            Node::Region(r) if &r.id == name && r.indent == nested.indent => {
                                Some(r)
                            }
                            _ => None,
                        })
                        .collect();
                    if count == 0 || run.len() != count {
                        return Err(self.refuse(
                            nested.begin_line,
                            DetangleErrorKind::UnknownChunk,
                            format!("included region `{name}` does not match the chunk table"),
                        ));
                    }
                    let actual: Vec<&String> = run.iter().flat_map(|r| r.raw.iter()).collect();
                    let mut expander = Expander {
                        table: self.table,
                        markers: true,
                        stack: Vec::new(),
                        unknown_languages: BTreeSet::new(),
                    };
                    let mut expected = Vec::new();
                    let same = expander
                        .expand_name(name, &nested.indent, &mut expected)
                        .is_ok()
                        && expected.len() == actual.len()
                        && expected
                            .iter()
                            .zip(&actual)
                            .all(|(e, a)| blank_equal(&e.text, a));
                    if !same {
                        return Err(self.refuse(
                            nested.begin_line,
                            DetangleErrorKind::AmbiguousEdit,
                            format!(
                                "edit inside included chunk `{name}` has no single owner; change it in its own region or in the document"
                            ),
                        ));
                    }
                    let reference_indent =
                        strip_indent(&nested.indent, &region.indent).unwrap_or_default();
                    body.push(format!("{reference_indent}<<{name}>>"));
                    i += count;
                }
            }
        }
        Ok(body)
    }
}

fn chunk_at<'s>(
    set: &'s DocumentSet,
    doc: &str,
    fence_line: usize,
) -> Option<(ChunkRef, &'s Chunk)> {
    set.chunks().find(|(r, c)| {
        display_path(&set.documents[r.doc].path) == doc && c.span.line_start == fence_line
    })
}

/// Pending replacement of one chunk body.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BodyEdit {
    pub chunk: ChunkRef,
    pub chunk_id: String,
    pub body: Vec<String>,
}

/// Chunk body edits implied by the given marked files. Nothing is applied;
/// any damaged or ambiguous region refuses the whole batch.
pub fn detangle_edits(
    set: &DocumentSet,
    files: &BTreeMap<String, String>,
) -> Result<Vec<BodyEdit>, DetangleFailure> {
    let table = ChunkTable::new(set);
    let mut problems = Vec::new();
    let mut edits = Vec::new();
    for (path, text) in files {
        let nodes = match parse_regions(path, text) {
            Ok(nodes) => nodes,
            Err(e) => {
                problems.push(e);
                continue;
            }
        };
        let rebuilder = Rebuilder {
            table: &table,
            path,
        };
        for node in &nodes {
            let region = match node {
                Node::Text { text, .. } if text.trim().is_empty() => continue,
                Node::Text { line, .. } => {
                    problems.push(rebuilder.refuse(
                        *line,
                        DetangleErrorKind::OutsideRegion,
                        "text outside any marked region".into(),
                    ));
                    continue;
                }
                Node::Region(region) => region,
            };
            let Some((r, chunk)) = chunk_at(set, &region.doc, region.fence_line)
                .filter(|(r, _)| set.chunk_id(*r) == region.id)
            else {
                problems.push(rebuilder.refuse(
                    region.begin_line,
                    DetangleErrorKind::UnknownChunk,
                    format!(
                        "no chunk `{}` at {}:{}",
                        region.id, region.doc, region.fence_line
                    ),
                ));
                continue;
            };
            match rebuilder.rebuild(region) {
                Ok(body) => {
                    if let Some(bad) = body.iter().position(|l| l.trim_start().starts_with("```")) {
                        problems.push(rebuilder.refuse(
                            region.begin_line + 1 + bad,
                            DetangleErrorKind::FenceInBody,
                            "a fence line cannot be placed inside a chunk".into(),
                        ));
                    } else if body != chunk.body {
                        edits.push(BodyEdit {
                            chunk: r,
                            chunk_id: set.chunk_id(r),
                            body,
                        });
                    }
                }
                Err(e) => problems.push(e),
            }
        }
    }
    if problems.is_empty() {
        Ok(edits)
    } else {
        Err(DetangleFailure::Refused(problems))
    }
}

/// Applies body edits by splicing raw text and re-parsing. Untouched bytes
/// are preserved.
pub fn apply_edits(set: &DocumentSet, edits: &[BodyEdit]) -> Result<DocumentSet, DetangleFailure> {
    let mut by_doc: BTreeMap<usize, Vec<&BodyEdit>> = BTreeMap::new();
    for edit in edits {
        by_doc.entry(edit.chunk.doc).or_default().push(edit);
    }
    let mut documents = set.documents.clone();
    for (doc_index, mut doc_edits) in by_doc {
        let doc = &set.documents[doc_index];
        let mut text = doc.raw_text.clone();
        doc_edits.sort_by_key(|e| std::cmp::Reverse(e.chunk.index));
        for edit in doc_edits {
            let range = set.chunk(edit.chunk).body_range.clone();
            text.replace_range(range, &join_lines(edit.body.iter().map(String::as_str)));
        }
        documents[doc_index] = parse_document(&doc.path, &text).map_err(|e| {
            DetangleFailure::Refused(vec![DetangleError {
                path: display_path(&doc.path),
                line: e.line,
                kind: DetangleErrorKind::Unparsable,
                message: e.to_string(),
            }])
        })?;
    }
    Ok(DocumentSet::new(documents))
}

/// Result of a detangle run.
#[derive(Clone, Debug)]
pub struct Detangled {
    pub set: DocumentSet,
    pub edits: Vec<BodyEdit>,
    /// Indices of documents whose text changed.
    pub changed_documents: Vec<usize>,
}

/// Pulls edits made in marked files under `out_root` back into the
/// documents. Files absent from disk are skipped.
pub fn detangle(set: &DocumentSet, out_root: &Path) -> Result<Detangled, DetangleFailure> {
    let expected = tangle(set, true)?;
    let mut files = BTreeMap::new();
    for rel in expected.files.keys() {
        let path = out_root.join(rel);
        match fs::read_to_string(&path) {
            Ok(text) => {
                files.insert(rel.clone(), text.replace("\r\n", "\n"));
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(io_error(&path)(e).into()),
        }
    }
    detangle_texts(set, &files)
}

/// [`detangle`] over in-memory file texts.
pub fn detangle_texts(
    set: &DocumentSet,
    files: &BTreeMap<String, String>,
) -> Result<Detangled, DetangleFailure> {
    let edits = detangle_edits(set, files)?;
    let updated = apply_edits(set, &edits)?;
    let changed_documents = (0..set.documents.len())
        .filter(|&i| set.documents[i].raw_text != updated.documents[i].raw_text)
        .collect();
    Ok(Detangled {
        set: updated,
        edits,
        changed_documents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(docs: &[(&str, &str)]) -> DocumentSet {
        DocumentSet::new(
            docs.iter()
                .map(|(p, t)| parse_document(p, t).unwrap())
                .collect(),
        )
    }

    const NESTED: &str = "\
```scheme file=out.scm chunk=main
(define (f)
  <<inner>>
  'done)
```

```scheme chunk=inner
a
b
```
";

    #[test]
    fn indentation_rule() {
        let s = set(&[("doc.md", NESTED)]);
        let table = ChunkTable::new(&s);
        assert_eq!(expand_chunk(&table, "inner").unwrap(), vec!["a", "b"]);
        assert_eq!(
            expand_chunk(&table, "main").unwrap(),
            vec!["(define (f)", "  a", "  b", "  'done)"]
        );
    }

    #[test]
    fn continuations_concatenate() {
        let text = "```c chunk=sum-core\nx\n```\n\n```c chunk=sum-core\ny\n```\n";
        let s = set(&[("d.md", text)]);
        assert_eq!(
            expand_chunk(&ChunkTable::new(&s), "sum-core").unwrap(),
            vec!["x", "y"]
        );
    }

    #[test]
    fn reference_on_closing_line_is_not_expanded() {
        // `<<inner>>)` is not a whole-line reference.
        let text = "```scheme chunk=m file=o.scm\n  <<inner>>)\n```\n";
        let s = set(&[("d.md", text)]);
        assert_eq!(
            expand_chunk(&ChunkTable::new(&s), "m").unwrap(),
            vec!["  <<inner>>)"]
        );
    }

    #[test]
    fn unresolved_and_cycle() {
        let s = set(&[("d.md", "```c file=o.c\n<<nope>>\n```\n")]);
        assert!(
            matches!(tangle(&s, false), Err(TangleError::Unresolved { name, .. }) if name == "nope")
        );
        let s = set(&[(
            "d.md",
            "```c chunk=a file=o.c\n<<b>>\n```\n```c chunk=b\n<<c>>\n```\n```c chunk=c\n<<a>>\n```\n",
        )]);
        match tangle(&s, false) {
            Err(TangleError::Cycle(path)) => assert_eq!(path, vec!["a", "b", "c", "a"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn markers_wrap_every_contribution() {
        let s = set(&[("doc.md", NESTED)]);
        let out = tangle(&s, true).unwrap();
        assert_eq!(
            out.files["out.scm"],
            ";; ILP:BEGIN main doc.md:1\n(define (f)\n  ;; ILP:BEGIN inner doc.md:7\n  a\n  b\n  ;; ILP:END inner\n  'done)\n;; ILP:END main\n"
        );
        assert_eq!(
            strip_markers(&out.files["out.scm"]),
            tangle(&s, false).unwrap().files["out.scm"]
        );
    }

    #[test]
    fn provenance_covers_every_line() {
        let s = set(&[("doc.md", NESTED)]);
        let out = tangle(&s, false).unwrap();
        let ids: Vec<_> = out
            .provenance
            .iter()
            .map(|p| (p.chunk_id.as_str(), p.lines.clone()))
            .collect();
        assert_eq!(ids, vec![("main", 1..2), ("inner", 2..4), ("main", 4..5)]);
    }

    #[test]
    fn doc_chunks_and_leaders() {
        let s = set(&[("d.md", "```scheme doc file=x.scm\n(x)\n```\n")]);
        assert!(tangle(&s, false).unwrap().files.is_empty());
        assert_eq!(comment_leader("python"), ("#", true));
        assert_eq!(comment_leader("Scheme"), (";;", true));
        assert_eq!(comment_leader("cobol"), ("//", false));
        let s = set(&[("d.md", "```cobol file=x.cob\nDISPLAY\n```\n")]);
        let out = tangle(&s, true).unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert!(out.files["x.cob"].starts_with("// ILP:BEGIN anon-1 d.md:1\n"));
    }

    #[test]
    fn targets_normalize() {
        assert_eq!(normalize_target("./a/../b.scm").as_deref(), Some("b.scm"));
        assert_eq!(normalize_target("../b.scm"), None);
        assert_eq!(normalize_target("/etc/x"), None);
        let s = set(&[("d.md", "```c file=../../etc/x\nx\n```\n")]);
        assert!(matches!(
            tangle(&s, false),
            Err(TangleError::PathEscape { .. })
        ));
    }

    #[test]
    fn continuation_inherits_target() {
        let text = "```c chunk=m file=o.c\nx\n```\n\n```c chunk=m\ny\n```\n";
        let out = tangle(&set(&[("d.md", text)]), false).unwrap();
        assert_eq!(out.files["o.c"], "x\ny\n");
    }

    #[test]
    fn first_difference() {
        assert_eq!(first_differing_line("a\nb\n", "a\nb\n"), None);
        assert_eq!(first_differing_line("a\nb\n", "a\nb\nc\n"), Some(3));
        assert_eq!(first_differing_line("a\nb\n", "a\nx\n"), Some(2));
    }

    #[test]
    fn detangle_edit_top_level() {
        let s = set(&[("doc.md", NESTED)]);
        let mut files = tangle(&s, true).unwrap().files;
        let edited = files["out.scm"].replace("(define (f)", "(define (g)");
        files.insert("out.scm".into(), edited);
        let result = detangle_texts(&s, &files).unwrap();
        assert_eq!(result.edits.len(), 1);
        assert_eq!(
            result.set.documents[0].raw_text,
            NESTED.replace("(define (f)", "(define (g)")
        );
    }

    #[test]
    fn detangle_identity() {
        let s = set(&[("doc.md", NESTED)]);
        let files = tangle(&s, true).unwrap().files;
        let result = detangle_texts(&s, &files).unwrap();
        assert!(result.edits.is_empty());
        assert_eq!(result.set, s);
    }

    #[test]
    fn detangle_refuses_nested_edit() {
        let s = set(&[("doc.md", NESTED)]);
        let mut files = tangle(&s, true).unwrap().files;
        let edited = files["out.scm"].replace("  a\n", "  z\n");
        files.insert("out.scm".into(), edited);
        match detangle_texts(&s, &files) {
            Err(DetangleFailure::Refused(problems)) => {
                assert_eq!(problems[0].kind, DetangleErrorKind::AmbiguousEdit);
                assert_eq!(problems[0].line, 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detangle_refuses_damaged_markers() {
        let s = set(&[("doc.md", NESTED)]);
        let mut files = tangle(&s, true).unwrap().files;
        let edited = files["out.scm"].replace(";; ILP:END main\n", "");
        files.insert("out.scm".into(), edited);
        match detangle_texts(&s, &files) {
            Err(DetangleFailure::Refused(problems)) => {
                assert_eq!(problems[0].kind, DetangleErrorKind::Unbalanced)
            }
            other => panic!("{other:?}"),
        }
    }
}
