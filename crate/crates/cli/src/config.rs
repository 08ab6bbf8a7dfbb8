//! `ilp.json` project configuration.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Component, Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use ilp_forge::model::{display_path, Diagnostic, DocumentSet, Severity};
use ilp_forge::parse_document;

use crate::EnvironmentError;

pub const CONFIG_NAME: &str = "ilp.json";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DocumentOrder {
    /// Only `"lexicographic"` is accepted.
    Named(String),
    /// Listed documents first, in this order; the rest follow sorted.
    Explicit(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub schema: u32,
    pub documents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<DocumentOrder>,
    #[serde(default = "default_out_root")]
    pub out_root: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluator: Option<String>,
    #[serde(default = "default_language")]
    pub default_language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<String>,
}

fn default_out_root() -> String {
    "build".to_string()
}

fn default_language() -> String {
    "scheme".to_string()
}

#[derive(Clone, Debug)]
pub struct ProjectConfig {
    pub raw: RawConfig,
    /// Directory holding the config file; document paths are relative to it.
    pub root: PathBuf,
    pub out_root: PathBuf,
    pub templates_dir: Option<PathBuf>,
}

/// Resolves the config path: the explicit one, or `ilp.json` in the
/// current directory or the nearest ancestor that has one.
pub fn locate(explicit: Option<&Path>) -> Result<PathBuf> {
    if let Some(path) = explicit {
        if !path.is_file() {
            return Err(
                EnvironmentError(format!("config file {} not found", path.display())).into(),
            );
        }
        return Ok(path.to_path_buf());
    }
    let cwd = std::env::current_dir().context("cannot read the current directory")?;
    for dir in cwd.ancestors() {
        let candidate = dir.join(CONFIG_NAME);
        if candidate.is_file() {
            return Ok(candidate
                .strip_prefix(&cwd)
                .map(Path::to_path_buf)
                .unwrap_or(candidate));
        }
    }
    Err(EnvironmentError(format!(
        "no {CONFIG_NAME} in {} or any parent directory",
        cwd.display()
    ))
    .into())
}

/// Lexical normalization; `None` when the path climbs above its start by
/// more than `max_up` levels or is absolute.
fn normalize_relative(path: &str, max_up: usize) -> Option<PathBuf> {
    let mut parts: Vec<String> = Vec::new();
    let mut up = 0;
    for component in Path::new(path).components() {
        match component {
            Component::CurDir => {}
            Component::ParentDir => {
                if parts.pop().is_none() {
                    up += 1;
                }
            }
            Component::Normal(s) => parts.push(s.to_string_lossy().into_owned()),
            Component::RootDir | Component::Prefix(_) => return None,
        }
    }
    if up > max_up || (up == 1 && parts.is_empty()) {
        return None;
    }
    let mut out = PathBuf::new();
    for _ in 0..up {
        out.push("..");
    }
    for p in parts {
        out.push(p);
    }
    Some(out)
}

impl ProjectConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| EnvironmentError(format!("cannot read {}: {e}", path.display())))?;
        let raw: RawConfig = serde_json::from_str(&text)
            .map_err(|e| anyhow!("{}: invalid config: {e}", path.display()))?;
        Self::from_raw(raw, path.parent().unwrap_or(Path::new("")))
    }

    pub fn from_raw(raw: RawConfig, root: &Path) -> Result<Self> {
        if raw.schema != SCHEMA_VERSION {
            bail!(
                "unsupported config schema {} (expected {SCHEMA_VERSION})",
                raw.schema
            );
        }
        if raw.documents.is_empty() {
            bail!("config lists no document globs");
        }
        if let Some(DocumentOrder::Named(name)) = &raw.order {
            if name != "lexicographic" {
                bail!("unknown document order `{name}` (use \"lexicographic\" or a list)");
            }
        }
        let out_rel = normalize_relative(&raw.out_root, 1).ok_or_else(|| {
            anyhow!(
                "out_root `{}` must stay inside or beside the project root",
                raw.out_root
            )
        })?;
        let templates_dir = raw.templates_dir.as_ref().map(|t| root.join(t));
        Ok(ProjectConfig {
            out_root: root.join(out_rel),
            templates_dir,
            root: root.to_path_buf(),
            raw,
        })
    }

    /// Project-relative document paths in configured order.
    pub fn document_paths(&self) -> Result<Vec<PathBuf>> {
        let mut found = BTreeSet::new();
        let out_rel = self
            .out_root
            .strip_prefix(&self.root)
            .ok()
            .map(Path::to_path_buf);
        for pattern in &self.raw.documents {
            let full = self.root.join(pattern);
            let entries = glob::glob(&full.to_string_lossy())
                .map_err(|e| anyhow!("bad document glob `{pattern}`: {e}"))?;
            for entry in entries {
                let path = entry.map_err(|e| anyhow!("{e}"))?;
                if !path.is_file() {
                    continue;
                }
                let rel = path.strip_prefix(&self.root).unwrap_or(&path).to_path_buf();
                if out_rel
                    .as_ref()
                    .is_some_and(|o| !o.as_os_str().is_empty() && rel.starts_with(o))
                {
                    continue;
                }
                found.insert(rel);
            }
        }
        if found.is_empty() {
            return Err(EnvironmentError(format!(
                "document globs {:?} match no files under {}",
                self.raw.documents,
                shown(&self.root)
            ))
            .into());
        }
        let mut ordered = Vec::new();
        if let Some(DocumentOrder::Explicit(list)) = &self.raw.order {
            for entry in list {
                let rel = PathBuf::from(entry);
                if !found.remove(&rel) {
                    bail!("ordered document `{entry}` is not matched by the document globs");
                }
                ordered.push(rel);
            }
        }
        ordered.extend(found);
        Ok(ordered)
    }

    /// Parses every document; the first parse failure is a [`ParseFailure`].
    pub fn load_documents(&self) -> Result<DocumentSet> {
        let mut documents = Vec::new();
        for rel in self.document_paths()? {
            let full = self.root.join(&rel);
            let text = fs::read_to_string(&full)
                .map_err(|e| EnvironmentError(format!("cannot read {}: {e}", full.display())))?;
            let doc = parse_document(&rel, &text).map_err(|e| {
                ParseFailure(Diagnostic {
                    path: self.root.join(&e.path),
                    byte_offset: 0,
                    line: e.line,
                    severity: Severity::Error,
                    message: e.kind.to_string(),
                })
            })?;
            documents.push(doc);
        }
        Ok(DocumentSet::new(documents))
    }

    /// Where a project-relative path lives on disk.
    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    /// A project-relative path as shown in diagnostics.
    pub fn shown(&self, rel: &Path) -> String {
        shown(&self.root.join(rel))
    }
}

pub fn shown(path: &Path) -> String {
    let s = display_path(path);
    if s.is_empty() {
        ".".to_string()
    } else {
        s
    }
}

/// A document that does not parse.
#[derive(Debug)]
pub struct ParseFailure(pub Diagnostic);

impl std::fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for ParseFailure {}
