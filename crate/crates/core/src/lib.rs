//! Interoperable literate programming toolchain.
//!
//! Documents are Markdown files where fenced code blocks carry chunk
//! metadata in their info string. The crate parses them, validates the
//! project, builds the dependency graph between APIs and chunks, tangles
//! chunks into a source tree (and detangles edits back), weaves
//! documentation with an index, runs `#:examples` through an external
//! evaluator, packs dependency-ordered prompts and merges generated code
//! back into the documents.

pub mod context;
pub mod doctest;
pub mod graph;
pub mod llm;
pub mod model;
pub mod parser;
pub mod tangle;
pub mod validate;
pub mod weave;

pub use model::{Diagnostic, Document, DocumentSet, Severity};
pub use parser::parse_document;
pub use validate::validate;
