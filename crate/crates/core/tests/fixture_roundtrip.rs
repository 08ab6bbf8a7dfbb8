mod common;

use std::collections::BTreeMap;

use ilp_forge::parse_document;
use ilp_forge::tangle::{detangle_texts, is_marker_line, tangle};

use common::{fixture_names, load_fixture};

#[test]
fn parse_serialize_parse_is_identity() {
    for name in fixture_names() {
        for doc in &load_fixture(&name).documents {
            let text = doc.serialize();
            assert_eq!(text, doc.raw_text, "{name}/{}", doc.path.display());
            assert_eq!(&parse_document(&doc.path, &text).unwrap(), doc);
        }
    }
}

#[test]
fn detangle_without_edits_is_a_fixed_point() {
    for name in fixture_names() {
        let set = load_fixture(&name);
        let files = tangle(&set, true).unwrap().files;
        let result = detangle_texts(&set, &files).unwrap();
        assert!(result.edits.is_empty(), "{name}");
        assert_eq!(result.set, set, "{name}");
        assert_eq!(tangle(&result.set, true).unwrap().files, files, "{name}");
    }
}

/// Lines that belong to a top-level region and are not markers.
fn editable_lines(text: &str) -> Vec<usize> {
    let mut depth = 0;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim_start();
        if is_marker_line(line) {
            if t.contains("ILP:BEGIN") {
                depth += 1;
            } else {
                depth -= 1;
            }
        } else if depth == 1 {
            out.push(i);
        }
    }
    out
}

#[test]
fn every_single_line_edit_survives_detangle() {
    let mut checked = 0;
    for name in fixture_names() {
        let set = load_fixture(&name);
        let files = tangle(&set, true).unwrap().files;
        for (path, text) in &files {
            for line in editable_lines(text) {
                let edited: String = text
                    .lines()
                    .enumerate()
                    .map(|(i, l)| {
                        if i == line {
                            format!("{l} ;edited\n")
                        } else {
                            format!("{l}\n")
                        }
                    })
                    .collect();
                let changed = BTreeMap::from([(path.clone(), edited.clone())]);
                let result = detangle_texts(&set, &changed)
                    .unwrap_or_else(|e| panic!("{name}/{path}:{}: {e}", line + 1));
                assert_eq!(result.changed_documents.len(), 1);
                let retangled = tangle(&result.set, true).unwrap().files;
                assert_eq!(retangled[path], edited, "{name}/{path}:{}", line + 1);
                for (other, body) in &files {
                    if other != path {
                        assert_eq!(&retangled[other], body);
                    }
                }
                checked += 1;
            }
        }
    }
    assert!(checked > 50, "only {checked} edits exercised");
}
