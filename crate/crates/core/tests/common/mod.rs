#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use ilp_forge::model::DocumentSet;
use ilp_forge::parse_document;

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Fixture projects: directories that carry an `ilp.json`.
pub fn fixture_names() -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(fixtures_dir())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join("ilp.json").is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

/// Loads a fixture the way the command line does for its flat layouts:
/// top-level `.md` files, sorted, with an explicit `order` list first.
pub fn load_fixture(name: &str) -> DocumentSet {
    let dir = fixtures_dir().join(name);
    let config: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("ilp.json")).unwrap()).unwrap();
    let mut files: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".md") && n != "README.md")
        .collect();
    files.sort();
    if let Some(order) = config["order"].as_array() {
        let listed: Vec<String> = order
            .iter()
            .map(|v| v.as_str().unwrap().to_string())
            .collect();
        files.retain(|f| !listed.contains(f));
        files.splice(0..0, listed);
    }
    let documents = files
        .iter()
        .map(|f| parse_document(f, &fs::read_to_string(dir.join(f)).unwrap()).unwrap())
        .collect();
    DocumentSet::new(documents)
}
