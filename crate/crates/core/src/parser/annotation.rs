//! `define-with-docs` forms.
//!
//! ```scheme
//! (define-with-docs quicksort
//!   #:pattern "divide-and-conquer"
//!   #:complexity "O(n log n)"
//!   #:stability "unstable"
//!   #:examples
//!   '((quicksort '(3 1 4 1 5 9 2 6 5 3))
//!     => (1 1 2 3 3 4 5 5 6 9))
//!   (lambda (lst) ...))
//! ```
//!
//! Two `#:examples` shapes are accepted: a quoted list holding
//! `expr => expected` triples (flat or as sub-lists), and one or more bare
//! `'expr => expected` triples following the keyword.

use std::collections::BTreeMap;
use std::ops::Range;

use thiserror::Error;

use crate::model::{Annotation, Diagnostic, Document, ExampleCase, Stability};
use crate::parser::sexpr::{Datum, Syntax, SyntaxNode};

pub const DEFINE_WITH_DOCS: &str = "define-with-docs";
const ARROW: &str = "=>";

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum AnnotationError {
    #[error("form is not a `define-with-docs` list")]
    NotAnnotation,
    #[error("`define-with-docs` form has no name")]
    MissingName,
    #[error("keyword #:{0} has no value")]
    MissingValue(String),
    #[error("#:examples must be a quoted list of `expr => expected` triples or a bare `expr => expected` triple")]
    ExamplesShape,
}

/// Maps spans local to a chunk body onto document spans.
pub struct SpanContext<'a> {
    pub document: &'a Document,
    pub base_offset: usize,
}

impl SpanContext<'_> {
    fn span(&self, local: &Range<usize>) -> crate::model::SourceSpan {
        self.document
            .span(self.base_offset + local.start..self.base_offset + local.end)
    }
}

fn unquote(syntax: &Syntax) -> Datum {
    match &syntax.node {
        SyntaxNode::Quoted(inner) => inner.to_datum(),
        _ => syntax.to_datum(),
    }
}

fn is_arrow(syntax: &Syntax) -> bool {
    syntax.atom().is_some_and(|d| d.is_symbol(ARROW))
}

/// Returns true when `syntax` is a list headed by `define-with-docs`.
pub fn is_annotation_form(syntax: &Syntax) -> bool {
    syntax
        .list_items()
        .and_then(|items| items.first())
        .and_then(Syntax::atom)
        .is_some_and(|d| d.is_symbol(DEFINE_WITH_DOCS))
}

/// Parses one `define-with-docs` form. Warning-level findings (unknown
/// keywords, odd stability values) are returned alongside the annotation.
pub fn parse_annotation(
    syntax: &Syntax,
    ctx: &SpanContext<'_>,
) -> Result<(Annotation, Vec<Diagnostic>), AnnotationError> {
    if !is_annotation_form(syntax) {
        return Err(AnnotationError::NotAnnotation);
    }
    let items = syntax.list_items().expect("checked list");
    let name = items
        .get(1)
        .and_then(Syntax::atom)
        .and_then(Datum::as_symbol)
        .ok_or(AnnotationError::MissingName)?
        .to_string();

    let mut warnings = Vec::new();
    let mut annotation = Annotation {
        name,
        pattern: None,
        complexity: None,
        stability: Stability::Unspecified,
        examples: Vec::new(),
        depends: Vec::new(),
        body: None,
        extra: BTreeMap::new(),
        span: ctx.span(&syntax.span),
    };

    let mut i = 2;
    while i < items.len() {
        let item = &items[i];
        let keyword = match item.atom() {
            Some(Datum::Keyword(k)) => k.clone(),
            _ => {
                if annotation.body.is_none() {
                    annotation.body = Some(item.to_datum());
                } else {
                    warnings.push(Diagnostic::warning(
                        &ctx.span(&item.span),
                        format!("extra datum in `{}` ignored", annotation.name),
                    ));
                }
                i += 1;
                continue;
            }
        };
        if keyword == "examples" {
            let (examples, consumed) = parse_examples(&items[i + 1..], ctx)?;
            annotation.examples = examples;
            i += 1 + consumed;
            continue;
        }
        let value = items
            .get(i + 1)
            .ok_or_else(|| AnnotationError::MissingValue(keyword.clone()))?;
        let datum = value.to_datum();
        match keyword.as_str() {
            "pattern" => annotation.pattern = Some(text_value(&datum)),
            "complexity" => annotation.complexity = Some(text_value(&datum)),
            "stability" => {
                annotation.stability = match text_value(&datum).as_str() {
                    "stable" => Stability::Stable,
                    "unstable" => Stability::Unstable,
                    other => {
                        warnings.push(Diagnostic::warning(
                            &ctx.span(&value.span),
                            format!("unknown stability `{other}`; treated as unspecified"),
                        ));
                        Stability::Unspecified
                    }
                }
            }
            "depends" => annotation.depends = symbol_list(&unquote(value)),
            _ => {
                warnings.push(Diagnostic::warning(
                    &ctx.span(&item.span),
                    format!("unknown keyword #:{keyword} in `{}`", annotation.name),
                ));
                annotation.extra.insert(keyword, datum);
            }
        }
        i += 2;
    }
    Ok((annotation, warnings))
}

fn text_value(datum: &Datum) -> String {
    datum
        .as_text_like()
        .map(str::to_string)
        .unwrap_or_else(|| datum.to_string())
}

fn symbol_list(datum: &Datum) -> Vec<String> {
    match datum {
        Datum::List(items) => items.iter().flat_map(symbol_list).collect(),
        Datum::Symbol(s) | Datum::Text(s) => vec![s.clone()],
        _ => Vec::new(),
    }
}

/// Parses the datums following `#:examples`; returns the cases and how many
/// datums were consumed.
fn parse_examples(
    rest: &[Syntax],
    ctx: &SpanContext<'_>,
) -> Result<(Vec<ExampleCase>, usize), AnnotationError> {
    let first = rest.first().ok_or(AnnotationError::ExamplesShape)?;

    if rest.get(1).is_some_and(is_arrow) {
        let mut cases = Vec::new();
        let mut i = 0;
        while rest.get(i + 1).is_some_and(is_arrow) {
            let expected = rest.get(i + 2).ok_or(AnnotationError::ExamplesShape)?;
            cases.push(ExampleCase {
                input_expr: unquote(&rest[i]),
                expected: unquote(expected),
                span: ctx.span(&(rest[i].span.start..expected.span.end)),
            });
            i += 3;
        }
        return Ok((cases, i));
    }

    let SyntaxNode::Quoted(inner) = &first.node else {
        return Err(AnnotationError::ExamplesShape);
    };
    let SyntaxNode::List(items) = &inner.node else {
        return Err(AnnotationError::ExamplesShape);
    };
    let case = |input: &Syntax, expected: &Syntax| ExampleCase {
        input_expr: input.to_datum(),
        expected: expected.to_datum(),
        span: ctx.span(&(input.span.start..expected.span.end)),
    };
    let cases = if items.iter().any(is_arrow) {
        if items.len() % 3 != 0 {
            return Err(AnnotationError::ExamplesShape);
        }
        items
            .chunks(3)
            .map(|t| {
                if is_arrow(&t[1]) && !is_arrow(&t[0]) && !is_arrow(&t[2]) {
                    Ok(case(&t[0], &t[2]))
                } else {
                    Err(AnnotationError::ExamplesShape)
                }
            })
            .collect::<Result<Vec<_>, _>>()?
    } else {
        items
            .iter()
            .map(|triple| match triple.list_items() {
                Some([input, arrow, expected]) if is_arrow(arrow) => Ok(case(input, expected)),
                _ => Err(AnnotationError::ExamplesShape),
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok((cases, 1))
}
