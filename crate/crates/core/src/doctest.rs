//! Executable checks built from `#:examples`.
//!
//! A test program is the tangled implementation of the annotated procedure
//! and everything it reaches, followed by one probe that prints `#t` when
//! the example holds. Programs go to a fresh evaluator process on stdin.

use std::collections::BTreeSet;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::graph::{build_graph, EdgeKind, NodeId};
use crate::model::{Diagnostic, DocumentSet, SourceSpan};
use crate::tangle::{self, expand_chunk, ChunkTable};

pub const EXPECTED_STDOUT: &str = "#t\n";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TestCase {
    pub annotation_name: String,
    /// 1-based position among the annotation's examples.
    pub example: usize,
    pub program: String,
    pub expected_stdout: String,
    pub origin: SourceSpan,
    /// Why the case cannot run, if it cannot.
    pub skip_reason: Option<String>,
}

impl TestCase {
    pub fn label(&self) -> String {
        format!("{}#{}", self.annotation_name, self.example)
    }
}

/// The probe appended to every program.
pub fn probe(input: &str, expected: &str) -> String {
    format!("(display (equal? {input} (quote {expected})))\n(newline)\n")
}

/// Implementation source for `target`: expansions of the lisp chunks
/// reachable from it, dependencies first. `None` when no chunk implements
/// the target.
pub fn implementation_program(set: &DocumentSet, target: &str) -> Option<String> {
    let graph = build_graph(set);
    let table = ChunkTable::new(set);
    let files = tangle::file_assignments(set).ok()?;

    // Nodes of tangleable lisp chunks; file nodes stand for unnamed chunks.
    let mut code_nodes: BTreeSet<NodeId> = BTreeSet::new();
    let mut roots: BTreeSet<NodeId> = BTreeSet::from([NodeId::from(target)]);
    for (_, chunk) in set.chunks() {
        if !chunk.is_tangleable() || !chunk.is_lisp() {
            continue;
        }
        let Some(node) = chunk.name.as_ref().or(chunk.file_target.as_ref()) else {
            continue;
        };
        let node = NodeId(node.clone());
        if chunk.name.as_deref() == Some(target)
            || chunk.defined_procedures().iter().any(|p| p == target)
        {
            roots.insert(node.clone());
        }
        code_nodes.insert(node);
    }
    let implemented = roots.iter().any(|r| code_nodes.contains(r));
    if !implemented {
        return None;
    }

    let mut keep: BTreeSet<NodeId> = BTreeSet::new();
    for root in &roots {
        if graph.contains(root.as_str()) {
            keep.insert(root.clone());
            keep.extend(
                graph
                    .reachable(root.as_str(), &EdgeKind::ALL)
                    .unwrap_or_default(),
            );
        }
    }
    let sub = graph.subgraph(&keep);
    let order = sub.topological_order(&EdgeKind::ALL).unwrap_or_else(|_| {
        // Mutual recursion: fall back to reverse discovery order.
        let mut nodes: Vec<NodeId> = keep.iter().cloned().collect();
        nodes.sort_by_key(|n| std::cmp::Reverse(sub.nodes[n].position));
        nodes
    });
    let included: BTreeSet<&NodeId> = sub
        .edges_of(&[EdgeKind::Inclusion])
        .map(|e| &e.to)
        .collect();

    let mut program = String::new();
    for node in order
        .iter()
        .filter(|n| code_nodes.contains(n) && !included.contains(n))
    {
        let lines = match table.get(node.as_str()) {
            Some(_) => expand_chunk(&table, node.as_str()).ok()?,
            None => {
                let key = tangle::normalize_target(node.as_str())?;
                let refs = files.get(&key)?;
                let mut lines = Vec::new();
                for &r in refs {
                    let chunk = set.chunk(r);
                    if chunk.name.is_none() && chunk.is_lisp() {
                        for line in &chunk.body {
                            match crate::model::parse_reference(line) {
                                Some((indent, name)) => lines.extend(
                                    expand_chunk(&table, name)
                                        .ok()?
                                        .into_iter()
                                        .map(|l| format!("{indent}{l}")),
                                ),
                                None => lines.push(line.clone()),
                            }
                        }
                    }
                }
                lines
            }
        };
        for line in lines {
            program.push_str(&line);
            program.push('\n');
        }
    }
    Some(program)
}

/// One case per example of each selected annotation, in document order.
/// Cases without an implementation are returned skipped, with a warning.
pub fn extract_tests(
    set: &DocumentSet,
    targets: Option<&[String]>,
) -> (Vec<TestCase>, Vec<Diagnostic>) {
    let mut cases = Vec::new();
    let mut diags = Vec::new();
    for a in set.annotations() {
        if targets.is_some_and(|t| !t.contains(&a.name)) || a.examples.is_empty() {
            continue;
        }
        let implementation = implementation_program(set, &a.name);
        if implementation.is_none() {
            diags.push(Diagnostic::warning(
                &a.span,
                format!(
                    "`{}` has examples but no implementation chunk; its tests are skipped",
                    a.name
                ),
            ));
        }
        for (i, ex) in a.examples.iter().enumerate() {
            let body = implementation.as_deref().unwrap_or("");
            cases.push(TestCase {
                annotation_name: a.name.clone(),
                example: i + 1,
                program: format!(
                    "{body}{}",
                    probe(&ex.input_expr.to_string(), &ex.expected.to_string())
                ),
                expected_stdout: EXPECTED_STDOUT.to_string(),
                origin: ex.span.clone(),
                skip_reason: implementation
                    .is_none()
                    .then(|| "no implementation chunk".to_string()),
            });
        }
    }
    (cases, diags)
}

/// Program plus arguments, e.g. `guile -s /dev/stdin`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvaluatorCommand {
    pub program: String,
    pub args: Vec<String>,
}

impl EvaluatorCommand {
    /// Splits a shell-style command line.
    pub fn parse(command: &str) -> Result<Self, String> {
        let mut words = shell_words::split(command).map_err(|e| e.to_string())?;
        if words.is_empty() {
            return Err("empty evaluator command".into());
        }
        let program = words.remove(0);
        Ok(EvaluatorCommand {
            program,
            args: words,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TestStatus {
    Pass,
    Fail,
    Error,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TestResult {
    pub label: String,
    pub status: TestStatus,
    pub stdout: String,
    pub stderr: String,
    pub message: Option<String>,
    pub origin: SourceSpan,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TestReport {
    pub results: Vec<TestResult>,
    pub pass: usize,
    pub fail: usize,
    pub error: usize,
    pub skipped: usize,
    /// The evaluator could not be started at all.
    pub evaluator_missing: bool,
}

impl TestReport {
    pub fn total(&self) -> usize {
        self.results.len()
    }

    pub fn is_success(&self) -> bool {
        self.fail == 0 && self.error == 0
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub timeout: Duration,
    pub workers: usize,
    /// Working directory of the evaluator; inherited when `None`.
    pub cwd: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            timeout: DEFAULT_TIMEOUT,
            workers: thread::available_parallelism()
                .map_or(1, |n| n.get())
                .min(8),
            cwd: None,
        }
    }
}

struct Outcome {
    stdout: String,
    stderr: String,
    exit_ok: bool,
}

enum RunError {
    NotFound(String),
    Timeout,
    Io(io::Error),
}

fn drain(mut source: impl Read + Send + 'static) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = source.read_to_end(&mut buf);
        buf
    })
}

fn run_one(
    evaluator: &EvaluatorCommand,
    program: &str,
    options: &RunOptions,
) -> Result<Outcome, RunError> {
    let timeout = options.timeout;
    let mut command = Command::new(&evaluator.program);
    if let Some(dir) = &options.cwd {
        command.current_dir(dir);
    }
    let mut child = command
        .args(&evaluator.args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| match e.kind() {
            io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied => {
                RunError::NotFound(format!("{}: {e}", evaluator.program))
            }
            _ => RunError::Io(e),
        })?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let input = program.as_bytes().to_vec();
    let writer = thread::spawn(move || {
        // A closed pipe means the evaluator stopped reading; not our error.
        let _ = stdin.write_all(&input);
    });
    let stdout = drain(child.stdout.take().expect("piped stdout"));
    let stderr = drain(child.stderr.take().expect("piped stderr"));
    let deadline = Instant::now() + timeout;
    let status = loop {
        if let Some(status) = child.try_wait().map_err(RunError::Io)? {
            break status;
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Err(RunError::Timeout);
        }
        thread::sleep(Duration::from_millis(5));
    };
    let _ = writer.join();
    Ok(Outcome {
        stdout: String::from_utf8_lossy(&stdout.join().unwrap_or_default()).into_owned(),
        stderr: String::from_utf8_lossy(&stderr.join().unwrap_or_default()).into_owned(),
        exit_ok: status.success(),
    })
}

fn judge(
    case: &TestCase,
    evaluator: &EvaluatorCommand,
    options: &RunOptions,
) -> (TestResult, bool) {
    let mut result = TestResult {
        label: case.label(),
        status: TestStatus::Skipped,
        stdout: String::new(),
        stderr: String::new(),
        message: case.skip_reason.clone(),
        origin: case.origin.clone(),
    };
    if case.skip_reason.is_some() {
        return (result, false);
    }
    match run_one(evaluator, &case.program, options) {
        Ok(outcome) => {
            result.status = if !outcome.exit_ok {
                result.message = Some("evaluator exited with failure status".into());
                TestStatus::Error
            } else if outcome.stdout.trim() == case.expected_stdout.trim() {
                TestStatus::Pass
            } else {
                result.message = Some(format!(
                    "expected {:?}, got {:?}",
                    case.expected_stdout.trim(),
                    outcome.stdout.trim()
                ));
                TestStatus::Fail
            };
            result.stdout = outcome.stdout;
            result.stderr = outcome.stderr;
            (result, false)
        }
        Err(RunError::NotFound(message)) => {
            result.status = TestStatus::Error;
            result.message = Some(format!("evaluator not found: {message}"));
            (result, true)
        }
        Err(RunError::Timeout) => {
            result.status = TestStatus::Error;
            result.message = Some(format!("timed out after {:?}", options.timeout));
            (result, false)
        }
        Err(RunError::Io(e)) => {
            result.status = TestStatus::Error;
            result.message = Some(e.to_string());
            (result, false)
        }
    }
}

/// Runs every case in its own evaluator process, up to `workers` at once.
/// Results keep the order of `tests`.
pub fn run_tests(
    tests: &[TestCase],
    evaluator: &EvaluatorCommand,
    options: &RunOptions,
) -> TestReport {
    let slots: Mutex<Vec<Option<(TestResult, bool)>>> = Mutex::new(vec![None; tests.len()]);
    let next = AtomicUsize::new(0);
    let workers = options.workers.clamp(1, tests.len().max(1));
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(case) = tests.get(i) else { break };
                let judged = judge(case, evaluator, options);
                slots.lock().expect("result slots")[i] = Some(judged);
            });
        }
    });
    let mut report = TestReport::default();
    for (result, missing) in slots
        .into_inner()
        .expect("result slots")
        .into_iter()
        .flatten()
    {
        report.evaluator_missing |= missing;
        match result.status {
            TestStatus::Pass => report.pass += 1,
            TestStatus::Fail => report.fail += 1,
            TestStatus::Error => report.error += 1,
            TestStatus::Skipped => report.skipped += 1,
        }
        report.results.push(result);
    }
    report
}
