//! Completion providers and the generate/merge loop.
//!
//! Only [`HttpProvider`] touches the network. The stubs make the whole
//! pipeline deterministic.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::context::{render_prompt, ContextBundle, Template};
use crate::model::{Diagnostic, DocumentSet, SourceSpan};
use crate::parser::{parse_document, ParseError};

pub const ENV_ENDPOINT: &str = "ILP_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "ILP_LLM_API_KEY";
pub const ENV_MODEL: &str = "ILP_LLM_MODEL";
pub const HTTP_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("no completion endpoint configured (set {ENV_ENDPOINT})")]
    MissingEndpoint,
    #[error("completion request failed: {0}")]
    Transport(String),
    #[error("completion endpoint answered with status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected completion response: {0}")]
    Malformed(String),
    #[error("empty completion response")]
    EmptyResponse,
    #[error("cannot read replay file {}: {source}", .path.display())]
    Replay {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub trait CompletionProvider {
    /// Short identifier recorded in provenance; contains no whitespace.
    fn id(&self) -> String;
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

/// Chat-completion endpoint speaking the common
/// `{model, messages}` / `choices[0].message.content` shape.
#[derive(Clone, Debug)]
pub struct HttpProvider {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
}

impl HttpProvider {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: Option<String>,
        model: impl Into<String>,
    ) -> Self {
        HttpProvider {
            endpoint: endpoint.into(),
            api_key,
            model: model.into(),
            timeout: HTTP_TIMEOUT,
        }
    }

    /// Reads `ILP_LLM_ENDPOINT`, `ILP_LLM_API_KEY` and `ILP_LLM_MODEL`.
    pub fn from_env() -> Result<Self, LlmError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        let endpoint = var(ENV_ENDPOINT).ok_or(LlmError::MissingEndpoint)?;
        Ok(HttpProvider::new(
            endpoint,
            var(ENV_API_KEY),
            var(ENV_MODEL).unwrap_or_else(|| "default".to_string()),
        ))
    }
}

impl CompletionProvider for HttpProvider {
    fn id(&self) -> String {
        format!("http:{}", self.model.replace(char::is_whitespace, "_"))
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let payload = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut request = client.post(&self.endpoint).json(&payload);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = response.status();
        let body = response
            .text()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(LlmError::Status {
                status: status.as_u16(),
                body,
            });
        }
        let value: serde_json::Value =
            serde_json::from_str(&body).map_err(|e| LlmError::Malformed(e.to_string()))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| LlmError::Malformed("missing choices[0].message.content".into()))
    }
}

/// Always answers with the same text.
#[derive(Clone, Debug)]
pub struct FixedProvider {
    pub response: String,
}

impl CompletionProvider for FixedProvider {
    fn id(&self) -> String {
        "fixed".to_string()
    }

    fn complete(&self, _prompt: &str) -> Result<String, LlmError> {
        Ok(self.response.clone())
    }
}

/// Answers with the contents of a recorded response file.
#[derive(Clone, Debug)]
pub struct ReplayProvider {
    pub path: PathBuf,
    pub response: String,
}

impl ReplayProvider {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let response = fs::read_to_string(path).map_err(|source| LlmError::Replay {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(ReplayProvider {
            path: path.to_path_buf(),
            response: response.replace("\r\n", "\n"),
        })
    }
}

impl CompletionProvider for ReplayProvider {
    fn id(&self) -> String {
        "replay".to_string()
    }

    fn complete(&self, _prompt: &str) -> Result<String, LlmError> {
        Ok(self.response.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GenerationProvenance {
    pub provider: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    /// Hex SHA-256 of the exact prompt text.
    pub prompt_digest: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GeneratedChunk {
    pub target_name: String,
    pub language: String,
    pub body: Vec<String>,
    pub provenance: GenerationProvenance,
    pub warnings: Vec<String>,
}

pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// The first fenced code block of a response: (info language, body lines).
pub fn first_fenced_block(response: &str) -> Option<(String, Vec<String>)> {
    let mut lines = response.lines();
    while let Some(line) = lines.next() {
        let trimmed = line.trim_start();
        let ticks = trimmed.len() - trimmed.trim_start_matches('`').len();
        if ticks < 3 {
            continue;
        }
        let fence = &trimmed[..ticks];
        let language = trimmed[ticks..]
            .split_whitespace()
            .next()
            .unwrap_or("")
            .to_string();
        let body: Vec<String> = lines
            .by_ref()
            .take_while(|l| !l.trim_start().starts_with(fence))
            .map(str::to_string)
            .collect();
        return Some((language, body));
    }
    None
}

/// Renders the prompt, asks the provider and extracts the code.
pub fn generate_for_target(
    provider: &dyn CompletionProvider,
    bundle: &ContextBundle,
    template: &Template,
    language: &str,
) -> Result<GeneratedChunk, LlmError> {
    let prompt = render_prompt(bundle, template, language);
    let response = provider.complete(&prompt)?;
    if response.trim().is_empty() {
        return Err(LlmError::EmptyResponse);
    }
    let mut warnings = Vec::new();
    let (fence_language, mut body) = match first_fenced_block(&response) {
        Some(block) => block,
        None => {
            warnings.push("response has no fenced code block; using the whole text".to_string());
            (
                String::new(),
                response.lines().map(str::to_string).collect(),
            )
        }
    };
    while body.last().is_some_and(|l| l.trim().is_empty()) {
        body.pop();
    }
    while body.first().is_some_and(|l| l.trim().is_empty()) {
        body.remove(0);
    }
    if body.is_empty() {
        return Err(LlmError::EmptyResponse);
    }
    Ok(GeneratedChunk {
        target_name: bundle.target.clone(),
        language: if fence_language.is_empty() {
            language.to_string()
        } else {
            fence_language
        },
        body,
        provenance: GenerationProvenance {
            provider: provider.id(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            prompt_digest: prompt_digest(&prompt),
        },
        warnings,
    })
}

/// Where a generated chunk goes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Placement {
    /// End of the section under a heading; `doc` narrows the search.
    Anchor { doc: Option<String>, anchor: String },
    /// After the last chunk tangled into this file; the chunk joins it.
    FileTarget(String),
}

impl Placement {
    /// `path.md#anchor`, `#anchor` or `anchor` name a heading; anything
    /// that matches a file target of the set names that file.
    pub fn resolve(set: &DocumentSet, spec: &str) -> Result<Placement, MergeError> {
        if let Some((doc, anchor)) = spec.rsplit_once('#') {
            return Ok(Placement::Anchor {
                doc: (!doc.is_empty()).then(|| doc.to_string()),
                anchor: anchor.to_string(),
            });
        }
        if set
            .documents
            .iter()
            .any(|d| d.headings().any(|h| h.anchor == spec))
        {
            return Ok(Placement::Anchor {
                doc: None,
                anchor: spec.to_string(),
            });
        }
        if set
            .chunks()
            .any(|(_, c)| c.file_target.as_deref() == Some(spec))
        {
            return Ok(Placement::FileTarget(spec.to_string()));
        }
        Err(MergeError::PlacementNotFound(spec.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("placement `{0}` matches no heading anchor or file target")]
    PlacementNotFound(String),
    #[error("generated code contains a fence line and cannot be embedded")]
    FenceInBody,
    #[error("merged document no longer parses: {0}")]
    Parse(#[from] ParseError),
}

/// Usual file extension for a language tag.
pub fn extension_for(language: &str) -> &str {
    match language.to_ascii_lowercase().as_str() {
        "python" | "py" => "py",
        "scheme" | "scm" | "goldfish" | "s7" => "scm",
        "racket" => "rkt",
        "lisp" => "lisp",
        "elisp" => "el",
        "clojure" => "clj",
        "javascript" | "js" => "js",
        "typescript" | "ts" => "ts",
        "rust" | "rs" => "rs",
        "c" => "c",
        "cpp" | "c++" => "cpp",
        "java" => "java",
        "go" => "go",
        "ruby" | "rb" => "rb",
        "sh" | "bash" | "shell" => "sh",
        "haskell" | "hs" => "hs",
        "lua" => "lua",
        _ => "txt",
    }
}

#[derive(Clone, Debug)]
pub struct Merged {
    pub set: DocumentSet,
    pub chunk_name: String,
    pub file_target: String,
    pub document: usize,
    pub warnings: Vec<Diagnostic>,
}

/// Inserts the generated code as a new chunk named `<target>-gen` (with a
/// numeric suffix on collision). Only bytes at the insertion point change.
pub fn merge_generated(
    set: &DocumentSet,
    generated: &GeneratedChunk,
    placement: &Placement,
    file_override: Option<&str>,
) -> Result<Merged, MergeError> {
    if generated
        .body
        .iter()
        .any(|l| l.trim_start().starts_with("```"))
    {
        return Err(MergeError::FenceInBody);
    }
    let (doc_index, position, placed_target) = match placement {
        Placement::Anchor { doc, anchor } => {
            let found = set.documents.iter().enumerate().find_map(|(i, d)| {
                if doc
                    .as_deref()
                    .is_some_and(|p| crate::model::display_path(&d.path) != p)
                {
                    return None;
                }
                let headings: Vec<_> = d.headings().collect();
                let idx = headings.iter().position(|h| &h.anchor == anchor)?;
                let level = headings[idx].level;
                let end = headings[idx + 1..]
                    .iter()
                    .find(|h| h.level <= level)
                    .map_or(d.raw_text.len(), |h| h.span.byte_start);
                Some((i, end))
            });
            let (i, end) = found.ok_or_else(|| MergeError::PlacementNotFound(anchor.clone()))?;
            (i, end, None)
        }
        Placement::FileTarget(target) => {
            let (r, chunk) = set
                .chunks()
                .filter(|(_, c)| c.file_target.as_deref() == Some(target.as_str()))
                .last()
                .ok_or_else(|| MergeError::PlacementNotFound(target.clone()))?;
            (r.doc, chunk.span.byte_end, Some(target.clone()))
        }
    };

    let existing = set.defined_names();
    let base = format!("{}-gen", generated.target_name);
    let mut name = base.clone();
    let mut n = 1;
    while existing.contains(&name) {
        n += 1;
        name = format!("{base}-{n}");
    }
    let doc = &set.documents[doc_index];
    let mut warnings = Vec::new();
    let here = doc.span(position..position);
    if n > 1 {
        warnings.push(Diagnostic::warning(
            &here,
            format!("chunk `{base}` already exists; naming the new chunk `{name}`"),
        ));
    }
    let file_target = placed_target
        .or_else(|| file_override.map(str::to_string))
        .unwrap_or_else(|| {
            format!(
                "generated/{}.{}",
                generated.target_name,
                extension_for(&generated.language)
            )
        });

    let before = &doc.raw_text[..position];
    let mut block = String::new();
    if !before.is_empty() && !before.ends_with("\n\n") {
        block.push_str(if before.ends_with('\n') { "\n" } else { "\n\n" });
    }
    let quote = |v: &str| {
        if v.contains(char::is_whitespace) {
            format!("\"{v}\"")
        } else {
            v.to_string()
        }
    };
    block.push_str(&format!(
        "```{} chunk={} file={} generated-by={} prompt-sha256={}\n",
        generated.language,
        quote(&name),
        quote(&file_target),
        generated.provenance.provider,
        &generated.provenance.prompt_digest[..16.min(generated.provenance.prompt_digest.len())],
    ));
    for line in &generated.body {
        block.push_str(line);
        block.push('\n');
    }
    block.push_str("```\n");
    if position < doc.raw_text.len() {
        block.push('\n');
    }
    let mut text = doc.raw_text.clone();
    text.insert_str(position, &block);
    let mut documents = set.documents.clone();
    documents[doc_index] = parse_document(&doc.path, &text)?;
    Ok(Merged {
        set: DocumentSet::new(documents),
        chunk_name: name,
        file_target,
        document: doc_index,
        warnings,
    })
}

/// Span of the inserted chunk in the merged set.
pub fn merged_chunk_span(merged: &Merged) -> Option<SourceSpan> {
    merged.set.documents[merged.document]
        .chunks()
        .find(|c| c.name.as_deref() == Some(merged.chunk_name.as_str()))
        .map(|c| c.span.clone())
}
