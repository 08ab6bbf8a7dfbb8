use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn copy_tree(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            if entry.file_name() != "build" {
                copy_tree(&entry.path(), &target);
            }
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

/// A scratch copy of every fixture; commands run inside one project.
struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
        copy_tree(&fixtures, dir.path());
        Sandbox { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, project: &str, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_ilp-forge"))
            .current_dir(self.path(project))
            .args(args)
            .env_remove("ILP_LLM_ENDPOINT")
            .output()
            .unwrap()
    }
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).unwrap()
}

#[test]
fn check_on_take_right_is_silent() {
    let sb = Sandbox::new();
    let out = sb.run("take-right", &["check"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(
        out.stdout.is_empty() && out.stderr.is_empty(),
        "{}",
        text(&out.stderr)
    );
}

#[test]
fn second_tangle_writes_nothing() {
    let sb = Sandbox::new();
    let first = sb.run("stages", &["tangle"]);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(
        text(&first.stdout),
        "wrote build/processing.scm\nwrote build/transform.scm\n"
    );
    let bytes = fs::read(sb.path("stages/build/processing.scm")).unwrap();
    let second = sb.run("stages", &["tangle"]);
    assert_eq!(second.status.code(), Some(0));
    assert!(second.stdout.is_empty());
    assert_eq!(
        fs::read(sb.path("stages/build/processing.scm")).unwrap(),
        bytes
    );
}

#[test]
fn missing_evaluator_is_an_environment_error() {
    let sb = Sandbox::new();
    let out = sb.run(
        "take-right",
        &["doctest", "--evaluator", "definitely-not-installed-7"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(text(&out.stderr).contains("error: evaluator `definitely-not-installed-7`"));
    let out = sb.run("extended-add", &["doctest"]);
    assert_eq!(out.status.code(), Some(3), "no evaluator configured");
}

#[test]
fn doctest_statuses() {
    let sb = Sandbox::new();
    let pass = sb.run("take-right", &["doctest"]);
    assert_eq!(pass.status.code(), Some(0));
    assert_eq!(
        text(&pass.stdout),
        "PASS take-right#1\n1 passed; 0 failed; 0 errors; 0 skipped\n"
    );
    let fail = sb.run(
        "take-right",
        &["doctest", "--evaluator", "sh ../evaluators/always-fail.sh"],
    );
    assert_eq!(fail.status.code(), Some(1));
    let unknown = sb.run("take-right", &["doctest", "no-such-api"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    let sb = Sandbox::new();
    assert_eq!(sb.run("stages", &["bogus"]).status.code(), Some(2));
    assert_eq!(
        sb.run("stages", &["context", "nothing-here"]).status.code(),
        Some(2)
    );
    assert_eq!(
        sb.run("stages", &["obfuscate", "--seed", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(sb.run("stages", &["--help"]).status.code(), Some(0));
}

#[test]
fn validation_errors_exit_1_with_compiler_style_lines() {
    let sb = Sandbox::new();
    let doc = sb.path("stages/pipeline.md");
    let broken = fs::read_to_string(&doc)
        .unwrap()
        .replace("  (process-initial input))", "  <<missing>>\n)");
    fs::write(&doc, broken).unwrap();
    let out = sb.run("stages", &["check"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = text(&out.stderr);
    assert!(
        stderr.lines().any(|l| l.starts_with("pipeline.md:")
            && l.contains(": error: ")
            && l.contains("missing")),
        "{stderr}"
    );
    assert_eq!(sb.run("stages", &["tangle"]).status.code(), Some(1));
    assert!(
        !sb.path("stages/build").exists(),
        "nothing is written for an invalid project"
    );
}

#[test]
fn startup_failures() {
    let sb = Sandbox::new();
    let config = sb.path("stages/ilp.json");
    let original = fs::read_to_string(&config).unwrap();
    fs::write(
        &config,
        original.replace("\"build\"", "\"../../elsewhere\""),
    )
    .unwrap();
    assert_eq!(sb.run("stages", &["check"]).status.code(), Some(1));
    fs::write(&config, original.replace("*.md", "*.nothing")).unwrap();
    assert_eq!(sb.run("stages", &["check"]).status.code(), Some(3));
    let out = Command::new(env!("CARGO_BIN_EXE_ilp-forge"))
        .current_dir(sb.dir.path())
        .args(["--config", "stages/ilp.json", "check"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(text(&out.stderr).contains("stages"));
}

#[test]
fn json_lines_parse() {
    let sb = Sandbox::new();
    let runs: &[(&str, &[&str])] = &[
        ("take-right", &["--json", "check"]),
        ("take-right", &["--json", "doctest"]),
        ("quicksort", &["--json", "doctest"]),
        ("stages", &["--json", "tangle"]),
        ("stages", &["--json", "drift"]),
        ("extended-add", &["--json", "graph"]),
        ("extended-add", &["--json", "graph", "--from", "add"]),
        ("take-right", &["--json", "context", "take-right"]),
        ("take-right", &["--json", "weave"]),
        (
            "ditu",
            &["--json", "obfuscate", "--names", "names.tsv", "--seed", "3"],
        ),
        (
            "take-right",
            &[
                "--json",
                "doctest",
                "--evaluator",
                "definitely-not-installed-7",
            ],
        ),
    ];
    for (project, args) in runs {
        let out = sb.run(project, args);
        let all = text(&out.stdout) + &text(&out.stderr);
        assert!(!all.is_empty() || args[1] == "check", "{args:?}");
        for line in all.lines() {
            serde_json::from_str::<serde_json::Value>(line)
                .unwrap_or_else(|e| panic!("{args:?}: {line:?}: {e}"));
        }
    }
}

#[test]
fn commands_are_deterministic() {
    let sb = Sandbox::new();
    for args in [
        &["weave"][..],
        &["weave", "--format", "html"],
        &["graph", "--dot"],
        &["context", "take-right", "--budget", "60"],
        &[
            "obfuscate",
            "--names",
            "../ditu/names.tsv",
            "--seed",
            "1",
            "--out",
            "o",
        ],
    ] {
        let a = sb.run("take-right", args);
        let b = sb.run("take-right", args);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
        assert_eq!(a.status.code(), b.status.code());
    }
}

#[test]
fn obfuscate_then_reverse_restores_documents() {
    let sb = Sandbox::new();
    let names = sb.path("names.txt");
    fs::write(&names, "take-right\ndrop\tshed\n").unwrap();
    let out = sb.run(
        "take-right",
        &[
            "obfuscate",
            "--names",
            names.to_str().unwrap(),
            "--seed",
            "9",
            "--map-out",
            "map.tsv",
            "--out",
            "obf",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let renamed = fs::read_to_string(sb.path("take-right/obf/lists.md")).unwrap();
    assert!(renamed.contains("(define (shed lst n)"));
    let back = Command::new(env!("CARGO_BIN_EXE_ilp-forge"))
        .current_dir(sb.path("take-right"))
        .args([
            "--config",
            "obf/ilp.json",
            "obfuscate",
            "--reverse",
            "map.tsv",
            "--out",
            "../restored",
        ])
        .output()
        .unwrap();
    assert_eq!(back.status.code(), Some(0), "{}", text(&back.stderr));
    assert_eq!(
        fs::read_to_string(sb.path("restored/lists.md")).unwrap(),
        fs::read_to_string(sb.path("take-right/lists.md")).unwrap()
    );
}

#[test]
fn generate_merges_and_tangles() {
    let sb = Sandbox::new();
    let out = sb.run(
        "take-right",
        &[
            "generate",
            "take-right",
            "--place",
            "take-right",
            "--language",
            "python",
            "--replay",
            "../replay/chatgpt4-take-right.txt",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert_eq!(sb.run("take-right", &["check"]).status.code(), Some(0));
    assert_eq!(sb.run("take-right", &["tangle"]).status.code(), Some(0));
    let py = fs::read_to_string(sb.path("take-right/build/generated/take-right.py")).unwrap();
    assert!(py.contains("def take_right(flist, i):"));

    let offline = sb.run("take-right", &["generate", "take-right"]);
    assert_eq!(offline.status.code(), Some(3), "no endpoint configured");
}

#[test]
fn detangle_round_trip_through_the_binary() {
    let sb = Sandbox::new();
    assert_eq!(
        sb.run("stages", &["tangle", "--markers"]).status.code(),
        Some(0)
    );
    let path = sb.path("stages/build/transform.scm");
    let edited = fs::read_to_string(&path).unwrap().replace(
        "(transform-intermediate data)",
        "(transform-intermediate (list data))",
    );
    fs::write(&path, &edited).unwrap();
    let drift = sb.run("stages", &["drift"]);
    assert_eq!(drift.status.code(), Some(1));
    assert!(text(&drift.stdout).contains("build/transform.scm: modified"));
    let out = sb.run("stages", &["detangle"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(fs::read_to_string(sb.path("stages/pipeline.md"))
        .unwrap()
        .contains("(transform-intermediate (list data))"));
    assert_eq!(sb.run("stages", &["drift"]).status.code(), Some(0));

    fs::write(&path, edited.replace(";; ILP:END stage-two\n", "")).unwrap();
    let refused = sb.run("stages", &["detangle"]);
    assert_eq!(refused.status.code(), Some(1));
    assert!(text(&refused.stderr).starts_with("build/transform.scm:"));
}
