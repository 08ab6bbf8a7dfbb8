//! Parsing of ILP Markdown documents and the embedded s-expression language.

pub mod annotation;
pub mod markdown;
pub mod sexpr;

pub use annotation::{parse_annotation, AnnotationError};
pub use markdown::{parse_document, parse_info_string, slugify, ParseError, ParseErrorKind};
pub use sexpr::{parse_datum, print_datum, read_all, Datum, ReadError};
