//! Project-level checks. All findings are returned as diagnostics so a
//! single pass reports everything.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Component, Path};

use crate::graph::{build_graph, EdgeKind};
use crate::model::{Diagnostic, DocumentSet};

/// Whether a relative target stays inside the project root.
pub fn path_escapes_root(target: &str) -> bool {
    let path = Path::new(target);
    if path.is_absolute() || target.starts_with('/') || target.starts_with('\\') {
        return true;
    }
    let mut depth: i64 = 0;
    for component in path.components() {
        match component {
            Component::ParentDir => {
                depth -= 1;
                if depth < 0 {
                    return true;
                }
            }
            Component::Normal(_) => depth += 1,
            Component::CurDir => {}
            Component::RootDir | Component::Prefix(_) => return true,
        }
    }
    false
}

/// Runs every rule over the set. Diagnostics are sorted by path, then byte
/// offset, so the result does not depend on document order.
pub fn validate(set: &DocumentSet) -> Vec<Diagnostic> {
    let mut diags: Vec<Diagnostic> = set
        .documents
        .iter()
        .flat_map(|d| d.diagnostics.iter().cloned())
        .collect();

    let table = set.chunk_table();
    let annotation_names: BTreeSet<&str> = set.annotations().map(|a| a.name.as_str()).collect();
    let step_names: BTreeSet<&str> = set.step_specs().map(|s| s.api_name.as_str()).collect();
    let resolves = |name: &str| table.contains_key(name) || annotation_names.contains(name);

    // Duplicate annotations: report every definition after the first.
    let mut by_name: BTreeMap<&str, Vec<&crate::model::Annotation>> = BTreeMap::new();
    for a in set.annotations() {
        by_name.entry(&a.name).or_default().push(a);
    }
    for (name, defs) in &by_name {
        for dup in defs.iter().skip(1) {
            diags.push(Diagnostic::error(
                &dup.span,
                format!(
                    "duplicate annotation `{name}` (first defined at {})",
                    defs[0].span
                ),
            ));
        }
    }

    for a in set.annotations() {
        for dep in &a.depends {
            if !resolves(dep) {
                diags.push(Diagnostic::error(
                    &a.span,
                    format!("`{}` depends on unknown name `{dep}`", a.name),
                ));
            }
        }
    }

    for doc in &set.documents {
        for link in &doc.links {
            if !resolves(&link.name) && !step_names.contains(link.name.as_str()) {
                diags.push(Diagnostic::error(
                    &link.span,
                    format!("unresolved link [[{}]]", link.name),
                ));
            }
        }
        for spec in &doc.step_specs {
            if !resolves(&spec.api_name) {
                diags.push(Diagnostic::warning(
                    &spec.span,
                    format!(
                        "step specification `{}` has no matching annotation or chunk",
                        spec.api_name
                    ),
                ));
            }
            if spec.zero_step.is_empty() || spec.succ_step.is_empty() {
                let missing = if spec.zero_step.is_empty() {
                    "zero-step"
                } else {
                    "succ-step"
                };
                diags.push(Diagnostic::warning(
                    &spec.span,
                    format!(
                        "step specification `{}` has no {missing} logic",
                        spec.api_name
                    ),
                ));
            }
            for helper in &spec.helpers {
                if !resolves(&helper.name) {
                    diags.push(Diagnostic::warning(
                        &helper.span,
                        format!("helper `{}` is not defined in the project", helper.name),
                    ));
                }
            }
        }
    }

    for (_, chunk) in set.chunks() {
        if chunk.name.is_none() && chunk.file_target.is_none() && !chunk.is_doc {
            diags.push(Diagnostic::error(
                &chunk.span,
                "code chunk has neither a name nor a file target",
            ));
        }
        if let Some(target) = &chunk.file_target {
            if path_escapes_root(target) {
                diags.push(Diagnostic::error(
                    &chunk.span,
                    format!("file target `{target}` escapes the project root"),
                ));
            }
            if chunk.is_doc && !chunk.attributes.contains_key("tangle") {
                diags.push(Diagnostic::warning(
                    &chunk.span,
                    format!(
                        "doc chunk targets `{target}` without a tangle attribute; it will not be tangled"
                    ),
                ));
            }
        }
        if chunk.is_tangleable() {
            for (_, _, name) in chunk.references() {
                let defined = table
                    .get(name)
                    .is_some_and(|cs| cs.iter().any(|(_, c)| c.is_tangleable()));
                if !defined {
                    diags.push(Diagnostic::error(
                        &chunk.span,
                        format!("unresolved chunk reference <<{name}>>"),
                    ));
                }
            }
        }
    }

    let graph = build_graph(set);
    if let Some(cycle) = graph.find_cycle(&[EdgeKind::Inclusion]) {
        let first = cycle[0].as_str();
        let span = table
            .get(first)
            .and_then(|cs| cs.first())
            .map(|(_, c)| c.span.clone());
        if let Some(span) = span {
            let mut path: Vec<&str> = cycle.iter().map(|n| n.as_str()).collect();
            path.push(first);
            diags.push(Diagnostic::error(
                &span,
                format!("chunk inclusion cycle: {}", path.join(" -> ")),
            ));
        }
    }

    diags.sort();
    diags.dedup();
    diags
}

/// True when no diagnostic is an error.
pub fn is_clean(diags: &[Diagnostic]) -> bool {
    !diags.iter().any(Diagnostic::is_error)
}
