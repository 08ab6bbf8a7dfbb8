//! ILP Markdown carrier format.
//!
//! Fenced blocks (three backticks) whose info string reads
//! `<language> key=value ...` are chunks; everything else is narrative.
//! Recognized keys are `file=`, `chunk=`, `doc` and `tangle=true|false`.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::model::{
    Block, Chunk, Diagnostic, Document, Heading, HelperDescription, LineIndex, Link, Narrative,
    StepSpec,
};
use crate::parser::annotation::{self, SpanContext};
use crate::parser::sexpr;

pub const FENCE: &str = "```";

static LINK_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[\[([A-Za-z0-9_?!+*/<>=-]+)\]\]").expect("valid regex"));
static HEADING_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(#{1,6})[ \t]+(.*?)[ \t]*$").expect("valid regex"));
static HELPER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?i:helper function):\s*`([^`]+)`\s*$").expect("valid regex"));
static KEY_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Za-z_][A-Za-z0-9_.-]*$").expect("valid regex"));

pub const ZERO_STEP_HEADING: &str = "Zero-Step Logic";
pub const SUCC_STEP_HEADING: &str = "Succ-Step Logic";

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unterminated code fence")]
    UnterminatedFence,
    #[error("malformed info string: {0}")]
    MalformedInfo(String),
    #[error("duplicate key `{0}` in info string")]
    DuplicateKey(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{}:{line}: {kind}", crate::model::display_path(path))]
pub struct ParseError {
    pub path: PathBuf,
    pub line: usize,
    pub kind: ParseErrorKind,
}

/// Parsed info string of a chunk fence.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InfoString {
    pub language: String,
    /// Keys in source order with their (unquoted) values; flags map to `None`.
    pub entries: Vec<(String, Option<String>)>,
}

/// Parses `lang (WS key(=value)?)*`; values may be double-quoted.
pub fn parse_info_string(info: &str) -> Result<InfoString, ParseErrorKind> {
    let mut chars = info.trim().chars().peekable();
    let mut words: Vec<String> = Vec::new();
    while chars.peek().is_some() {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        let mut word = String::new();
        let mut quoted = false;
        while let Some(&c) = chars.peek() {
            if c.is_whitespace() && !quoted {
                break;
            }
            chars.next();
            if c == '"' {
                quoted = !quoted;
            } else if c == '\\' && quoted {
                match chars.next() {
                    Some(n) => word.push(n),
                    None => break,
                }
                continue;
            }
            word.push(c);
        }
        if quoted {
            return Err(ParseErrorKind::MalformedInfo("unterminated quote".into()));
        }
        if !word.is_empty() {
            words.push(word);
        }
    }
    let mut words = words.into_iter();
    let language = words
        .next()
        .ok_or_else(|| ParseErrorKind::MalformedInfo("missing language".into()))?;
    if language.contains(['=', '"']) {
        return Err(ParseErrorKind::MalformedInfo(format!(
            "expected a language tag, found `{language}`"
        )));
    }
    let mut entries: Vec<(String, Option<String>)> = Vec::new();
    for word in words {
        let (key, value) = match word.split_once('=') {
            Some((k, v)) => {
                let v = v
                    .strip_prefix('"')
                    .and_then(|v| v.strip_suffix('"'))
                    .unwrap_or(v);
                if v.is_empty() {
                    return Err(ParseErrorKind::MalformedInfo(format!(
                        "empty value for `{k}`"
                    )));
                }
                (k.to_string(), Some(v.replace("\\\"", "\"")))
            }
            None => (word.clone(), None),
        };
        if !KEY_RE.is_match(&key) {
            return Err(ParseErrorKind::MalformedInfo(format!(
                "invalid key `{key}`"
            )));
        }
        if entries.iter().any(|(k, _)| *k == key) {
            return Err(ParseErrorKind::DuplicateKey(key));
        }
        entries.push((key, value));
    }
    Ok(InfoString { language, entries })
}

struct Line<'a> {
    text: &'a str,
    start: usize,
    /// End including the newline, if any.
    end: usize,
}

fn split_lines(text: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    let mut start = 0;
    for piece in text.split_inclusive('\n') {
        let end = start + piece.len();
        out.push(Line {
            text: piece.strip_suffix('\n').unwrap_or(piece),
            start,
            end,
        });
        start = end;
    }
    out
}

fn is_closing_fence(line: &str) -> bool {
    line.trim_end() == FENCE
}

/// Anchor slug for a heading title: lowercase alphanumerics, `-` and `_`.
pub fn slugify(title: &str) -> String {
    let mut slug = String::new();
    for c in title.trim().chars() {
        if c.is_alphanumeric() || c == '-' || c == '_' {
            slug.extend(c.to_lowercase());
        } else if c.is_whitespace() {
            slug.push('-');
        }
    }
    if slug.is_empty() {
        slug.push_str("section");
    }
    slug
}

/// Heading title with surrounding backticks removed, used for API names.
fn plain_title(title: &str) -> &str {
    title.trim().trim_matches('`').trim()
}

enum RawBlock {
    Narrative(Range<usize>),
    Chunk {
        range: Range<usize>,
        info: InfoString,
        info_range: Range<usize>,
        body: Range<usize>,
        body_lines: Vec<String>,
    },
}

/// Parses ILP Markdown. `\r\n` line endings are normalized to `\n` first.
pub fn parse_document(path: impl AsRef<Path>, text: &str) -> Result<Document, ParseError> {
    let path = path.as_ref().to_path_buf();
    let raw_text = text.replace("\r\n", "\n");
    let lines = split_lines(&raw_text);
    let line_index = LineIndex::new(&raw_text);
    let err_path = path.clone();
    let err = move |line: usize, kind| ParseError {
        path: err_path.clone(),
        line,
        kind,
    };

    // Pass 1: partition into narrative and chunk blocks.
    let mut raw_blocks = Vec::new();
    let mut narrative_start: Option<usize> = None;
    // Lines inside plain (info-less) fences; headings there are ignored.
    let mut code_lines = vec![false; lines.len()];
    let mut i = 0;
    while i < lines.len() {
        let line = &lines[i];
        let Some(info) = line.text.strip_prefix(FENCE) else {
            narrative_start.get_or_insert(line.start);
            i += 1;
            continue;
        };
        let close = (i + 1..lines.len())
            .find(|&j| is_closing_fence(lines[j].text))
            .ok_or_else(|| err(i + 1, ParseErrorKind::UnterminatedFence))?;
        if info.trim().is_empty() {
            narrative_start.get_or_insert(line.start);
            code_lines[i..=close].iter_mut().for_each(|c| *c = true);
            i = close + 1;
            continue;
        }
        if info.starts_with('`') {
            return Err(err(
                i + 1,
                ParseErrorKind::MalformedInfo("fences use exactly three backticks".into()),
            ));
        }
        let parsed = parse_info_string(info).map_err(|k| err(i + 1, k))?;
        if let Some(start) = narrative_start.take() {
            raw_blocks.push(RawBlock::Narrative(start..line.start));
        }
        let body_start = lines[i].end;
        let body_end = lines[close].start;
        let info_start = line.start + FENCE.len();
        raw_blocks.push(RawBlock::Chunk {
            range: line.start..lines[close].end,
            info: parsed,
            info_range: info_start..info_start + info.len(),
            body: body_start..body_end,
            body_lines: lines[i + 1..close]
                .iter()
                .map(|l| l.text.to_string())
                .collect(),
        });
        i = close + 1;
    }
    if let Some(start) = narrative_start {
        raw_blocks.push(RawBlock::Narrative(start..raw_text.len()));
    }

    let mut doc = Document {
        path,
        blocks: Vec::new(),
        raw_text: String::new(),
        step_specs: Vec::new(),
        annotations: Vec::new(),
        links: Vec::new(),
        diagnostics: Vec::new(),
        lines: line_index,
    };
    // Spans are computed against the final text, so install it first.
    doc.raw_text = raw_text.clone();

    // Pass 2: headings, anchors and links in narrative.
    let mut anchor_counts: HashMap<String, usize> = HashMap::new();
    for raw in raw_blocks {
        match raw {
            RawBlock::Narrative(range) => {
                let mut headings = Vec::new();
                for (idx, line) in lines.iter().enumerate() {
                    if line.start < range.start || line.start >= range.end {
                        continue;
                    }
                    if code_lines[idx] {
                        continue;
                    }
                    if let Some(caps) = HEADING_RE.captures(line.text) {
                        let title = caps[2].trim_end_matches('#').trim_end().to_string();
                        let base = slugify(&title);
                        let count = anchor_counts.entry(base.clone()).or_insert(0);
                        let anchor = if *count == 0 {
                            base.clone()
                        } else {
                            format!("{base}-{count}")
                        };
                        *count += 1;
                        headings.push(Heading {
                            level: caps[1].len() as u8,
                            title,
                            anchor,
                            span: doc.span(line.start..line.start + line.text.len()),
                        });
                    }
                    for m in LINK_RE.captures_iter(line.text) {
                        let whole = m.get(0).expect("match");
                        doc.links.push(Link {
                            name: m[1].to_string(),
                            span: doc.span(line.start + whole.start()..line.start + whole.end()),
                        });
                    }
                }
                doc.blocks.push(Block::Narrative(Narrative {
                    markdown_text: raw_text[range.clone()].to_string(),
                    headings,
                    span: doc.span(range),
                }));
            }
            RawBlock::Chunk {
                range,
                info,
                info_range,
                body,
                body_lines,
            } => {
                let mut attributes = BTreeMap::new();
                let mut name = None;
                let mut file_target = None;
                for (key, value) in info.entries {
                    match key.as_str() {
                        "file" => file_target = value,
                        "chunk" => name = value,
                        "tangle" => {
                            let v = value.unwrap_or_default();
                            if v != "true" && v != "false" {
                                return Err(err(
                                    doc.lines.line_of(range.start),
                                    ParseErrorKind::MalformedInfo(format!(
                                        "tangle must be true or false, found `{v}`"
                                    )),
                                ));
                            }
                            attributes.insert(key, v);
                        }
                        _ => {
                            attributes.insert(key, value.unwrap_or_default());
                        }
                    }
                }
                let is_doc = attributes.contains_key("doc");
                doc.blocks.push(Block::Chunk(Chunk {
                    name,
                    language: info.language,
                    file_target,
                    attributes,
                    body: body_lines,
                    is_doc,
                    span: doc.span(range),
                    body_range: body,
                    info_range,
                }));
            }
        }
    }

    collect_annotations(&mut doc);
    doc.step_specs = collect_step_specs(&doc);
    Ok(doc)
}

fn collect_annotations(doc: &mut Document) {
    let mut annotations = Vec::new();
    let mut diagnostics = Vec::new();
    for chunk in doc.chunks() {
        if !chunk.is_lisp() {
            continue;
        }
        let text = &doc.raw_text[chunk.body_range.clone()];
        let forms = match sexpr::read_all(text) {
            Ok(forms) => forms,
            Err(e) => {
                if text.contains(annotation::DEFINE_WITH_DOCS) {
                    let at = chunk.body_range.start + e.offset;
                    diagnostics.push(Diagnostic::error(
                        &doc.span(at..at),
                        format!("cannot read annotation chunk: {}", e.kind),
                    ));
                }
                continue;
            }
        };
        let ctx = SpanContext {
            document: doc,
            base_offset: chunk.body_range.start,
        };
        for form in forms.iter().filter(|f| annotation::is_annotation_form(f)) {
            match annotation::parse_annotation(form, &ctx) {
                Ok((a, warnings)) => {
                    annotations.push(a);
                    diagnostics.extend(warnings);
                }
                Err(e) => {
                    let at = ctx.base_offset + form.span.start;
                    diagnostics.push(Diagnostic::error(&doc.span(at..at), e.to_string()));
                }
            }
        }
    }
    doc.annotations = annotations;
    doc.diagnostics.extend(diagnostics);
}

/// Narrative text of `range` with chunk blocks cut out, trimmed.
fn narrative_text(doc: &Document, range: Range<usize>) -> String {
    let mut out = String::new();
    let mut cursor = range.start;
    for chunk in doc.chunks() {
        let c = chunk.span.range();
        if c.start >= range.end || c.end <= range.start {
            continue;
        }
        out.push_str(&doc.raw_text[cursor..c.start.max(cursor)]);
        cursor = c.end.min(range.end);
    }
    if cursor < range.end {
        out.push_str(&doc.raw_text[cursor..range.end]);
    }
    out.trim().to_string()
}

fn collect_step_specs(doc: &Document) -> Vec<StepSpec> {
    let headings: Vec<&Heading> = doc.headings().collect();
    // Each heading's content runs to the next heading of any level.
    let content_end = |idx: usize| {
        headings
            .get(idx + 1)
            .map_or(doc.raw_text.len(), |h| h.span.byte_start)
    };
    let line_end = |h: &Heading| {
        doc.raw_text[h.span.byte_end..]
            .find('\n')
            .map_or(doc.raw_text.len(), |n| h.span.byte_end + n + 1)
    };
    let mut specs = Vec::new();
    for (idx, top) in headings.iter().enumerate() {
        if top.level != 2 {
            continue;
        }
        let section_end_idx = (idx + 1..headings.len())
            .find(|&j| headings[j].level <= 2)
            .unwrap_or(headings.len());
        let section_end = headings
            .get(section_end_idx)
            .map_or(doc.raw_text.len(), |h| h.span.byte_start);

        let mut zero = None;
        let mut succ = None;
        let mut helpers = Vec::new();
        let mut core_end = line_end(top);
        for (j, sub) in headings
            .iter()
            .enumerate()
            .take(section_end_idx)
            .skip(idx + 1)
        {
            if sub.level != 3 {
                continue;
            }
            let body = line_end(sub)..content_end(j);
            let title = sub.title.trim();
            if title.eq_ignore_ascii_case(ZERO_STEP_HEADING) {
                zero = Some(narrative_text(doc, body.clone()));
                core_end = core_end.max(body.end);
            } else if title.eq_ignore_ascii_case(SUCC_STEP_HEADING) {
                succ = Some(narrative_text(doc, body.clone()));
                core_end = core_end.max(body.end);
            } else if let Some(caps) = HELPER_RE.captures(title) {
                helpers.push(HelperDescription {
                    name: caps[1].to_string(),
                    text: format!(
                        "{}\n\n{}",
                        doc.raw_text[sub.span.range()].trim_end(),
                        narrative_text(doc, body.clone())
                    ),
                    span: doc.span(sub.span.byte_start..body.end),
                });
            }
        }
        if zero.is_none() && succ.is_none() {
            continue;
        }
        specs.push(StepSpec {
            api_name: plain_title(&top.title).to_string(),
            zero_step: zero.unwrap_or_default(),
            succ_step: succ.unwrap_or_default(),
            helper_refs: helpers.iter().map(|h| h.name.clone()).collect(),
            helpers,
            span: doc.span(top.span.byte_start..section_end),
            core_span: doc.span(top.span.byte_start..core_end),
            heading_anchor: top.anchor.clone(),
        });
    }
    specs
}
