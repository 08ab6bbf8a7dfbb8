//! The `ilp-forge` command line.
//!
//! Exit statuses: 0 success, 1 validation or test failure, 2 usage error,
//! 3 environment error (missing config, evaluator, endpoint or files).

pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use ilp_forge::context::{
    apply_mapping, obfuscate_with, pack_context, render_prompt, ContextError, RenameMapping,
    Template,
};
use ilp_forge::doctest::{extract_tests, run_tests, EvaluatorCommand, RunOptions, TestStatus};
use ilp_forge::graph::{build_graph, describe, EdgeKind};
use ilp_forge::llm::{
    generate_for_target, merge_generated, CompletionProvider, HttpProvider, LlmError, Placement,
    ReplayProvider,
};
use ilp_forge::model::{display_path, Diagnostic, DocumentSet};
use ilp_forge::tangle::{self, check_drift, DetangleFailure, DriftStatus, TangleError};
use ilp_forge::validate;
use ilp_forge::weave::{weave, WeaveFormat};

use config::{ParseFailure, ProjectConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ENVIRONMENT: i32 = 3;

pub const DEFAULT_BUDGET: usize = 4000;

/// Bad arguments that clap cannot catch (unknown target, missing flag).
#[derive(Debug)]
pub struct UsageError(pub String);

/// Something outside the project is missing or broken.
#[derive(Debug)]
pub struct EnvironmentError(pub String);

/// Failure whose details were already printed.
#[derive(Debug)]
struct Reported;

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for EnvironmentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Reported {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("failed")
    }
}

impl std::error::Error for UsageError {}
impl std::error::Error for EnvironmentError {}
impl std::error::Error for Reported {}

#[derive(Debug, Parser)]
#[command(
    name = "ilp-forge",
    version,
    about = "Tangle, weave, test and prompt from literate documents"
)]
pub struct Cli {
    /// Project config file (default: nearest ilp.json).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Emit one JSON object per output line.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the code files assembled from the documents.
    Tangle {
        /// Output root (default: `out_root` from the config).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Wrap every chunk in provenance markers (needed by detangle).
        #[arg(long)]
        markers: bool,
    },
    /// Render the documents with cross-references and an index.
    Weave {
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
        /// Write here instead of standard output.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Validate the documents.
    Check,
    /// Run annotation examples through an external evaluator.
    Doctest {
        /// Evaluator command line, fed each test program on stdin
        /// (default: `evaluator` from the config).
        #[arg(long, value_name = "CMD")]
        evaluator: Option<String>,
        /// Parallel evaluator processes (default: CPUs, at most 8).
        #[arg(long, value_name = "N")]
        jobs: Option<usize>,
        /// Per-test timeout in seconds [default: 10].
        #[arg(long, value_name = "SECS")]
        timeout: Option<u64>,
        /// Only run examples of these APIs.
        targets: Vec<String>,
    },
    /// Print the prompt context for a target.
    Context(ContextArgs),
    /// Rename names consistently and write the renamed documents.
    Obfuscate {
        /// One name per line, optionally `name<TAB>replacement`.
        #[arg(long, value_name = "FILE", required_unless_present = "reverse")]
        names: Option<PathBuf>,
        /// Seed for the generated pseudo-names.
        #[arg(long, value_name = "N", required_unless_present = "reverse")]
        seed: Option<u64>,
        /// Write the mapping here instead of standard output.
        #[arg(long, value_name = "FILE")]
        map_out: Option<PathBuf>,
        /// Output directory (default: <out_root>/obfuscated).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Undo a previous run using its mapping file.
        #[arg(long, value_name = "MAP", conflicts_with_all = ["names", "seed"])]
        reverse: Option<PathBuf>,
    },
    /// Show the dependency graph.
    Graph {
        /// Print Graphviz DOT.
        #[arg(long)]
        dot: bool,
        /// List what `NAME` reaches through hard edges, layer by layer.
        #[arg(long, value_name = "NAME", conflicts_with = "dot")]
        from: Option<String>,
    },
    /// Ask a completion provider for code and merge it into the documents.
    Generate {
        #[command(flatten)]
        context: ContextArgs,
        /// Heading anchor (`doc.md#anchor` or `anchor`) or file target.
        #[arg(long, value_name = "ANCHOR")]
        place: Option<String>,
        /// Answer from a recorded response file instead of the network.
        #[arg(long, value_name = "FILE")]
        replay: Option<PathBuf>,
        /// File target of the new chunk.
        #[arg(long, value_name = "PATH")]
        file: Option<String>,
    },
    /// Copy edits in marked tangled files back into the documents.
    Detangle {
        /// Tangled tree to read (default: `out_root` from the config).
        #[arg(long, value_name = "DIR")]
        root: Option<PathBuf>,
    },
    /// Compare tangled files on disk with the documents.
    Drift {
        /// Tangled tree to compare (default: `out_root` from the config).
        #[arg(long, value_name = "DIR")]
        root: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ContextArgs {
    /// API or chunk name.
    pub target: String,
    /// Token budget for the packed segments (4 characters per token).
    #[arg(long, value_name = "N", default_value_t = DEFAULT_BUDGET)]
    pub budget: usize,
    /// Built-in template (`stepwise`, `fully-based`), a name under the
    /// templates dir, or a file path.
    #[arg(long, value_name = "NAME", default_value = "stepwise")]
    pub template: String,
    /// Language named in the request (default: `default_language`).
    #[arg(long, value_name = "L")]
    pub language: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Md,
    Html,
}

struct Ui<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    json: bool,
}

impl Ui<'_> {
    fn line(&mut self, text: &str) -> io::Result<()> {
        writeln!(self.out, "{text}")
    }

    fn record(&mut self, value: serde_json::Value) -> io::Result<()> {
        writeln!(self.out, "{value}")
    }

    fn diagnostic(&mut self, config: Option<&ProjectConfig>, d: &Diagnostic) -> io::Result<()> {
        let path = match config {
            Some(c) => c.shown(&d.path),
            None => display_path(&d.path),
        };
        if self.json {
            let value = json!({
                "type": "diagnostic",
                "path": path,
                "line": d.line,
                "severity": d.severity,
                "message": d.message,
            });
            writeln!(self.err, "{value}")
        } else {
            writeln!(self.err, "{path}:{}: {}: {}", d.line, d.severity, d.message)
        }
    }

    fn error(&mut self, kind: &str, message: &str) -> io::Result<()> {
        if self.json {
            let value = json!({"type": "error", "kind": kind, "message": message});
            writeln!(self.err, "{value}")
        } else {
            writeln!(self.err, "ilp-forge: error: {message}")
        }
    }

    fn warning(&mut self, message: &str) -> io::Result<()> {
        if self.json {
            let value = json!({"type": "diagnostic", "severity": "warning", "message": message});
            writeln!(self.err, "{value}")
        } else {
            writeln!(self.err, "ilp-forge: warning: {message}")
        }
    }
}

/// Runs with the process's stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let mut ui = Ui {
        out,
        err,
        json: cli.json,
    };
    match dispatch(&cli, &mut ui) {
        Ok(code) => code,
        Err(e) => report(&mut ui, e),
    }
}

fn report(ui: &mut Ui, e: anyhow::Error) -> i32 {
    if e.is::<Reported>() {
        return EXIT_FAILURE;
    }
    if let Some(ParseFailure(d)) = e.downcast_ref::<ParseFailure>() {
        let _ = ui.diagnostic(None, d);
        return EXIT_FAILURE;
    }
    let (kind, code) = if e.is::<UsageError>() {
        ("usage", EXIT_USAGE)
    } else if e.is::<EnvironmentError>() || e.chain().any(|c| c.is::<io::Error>()) {
        ("environment", EXIT_ENVIRONMENT)
    } else {
        ("failure", EXIT_FAILURE)
    };
    let _ = ui.error(kind, &format!("{e:#}"));
    code
}

struct Project {
    config: ProjectConfig,
    set: DocumentSet,
}

fn load(cli: &Cli) -> Result<Project> {
    let path = config::locate(cli.config.as_deref())?;
    let config = ProjectConfig::load(&path)?;
    let set = config.load_documents()?;
    Ok(Project { config, set })
}

/// Stops with exit 1 after printing the errors when validation fails.
fn require_valid(ui: &mut Ui, project: &Project) -> Result<()> {
    let diags = validate(&project.set);
    if validate::is_clean(&diags) {
        return Ok(());
    }
    for d in diags.iter().filter(|d| d.is_error()) {
        ui.diagnostic(Some(&project.config), d)?;
    }
    Err(Reported.into())
}

fn tangle_error(e: TangleError) -> anyhow::Error {
    match e {
        TangleError::Io { .. } => EnvironmentError(e.to_string()).into(),
        other => anyhow!(other),
    }
}

fn dispatch(cli: &Cli, ui: &mut Ui) -> Result<i32> {
    let project = load(cli)?;
    match &cli.command {
        Command::Check => cmd_check(ui, &project),
        Command::Tangle { out, markers } => cmd_tangle(ui, &project, out.as_deref(), *markers),
        Command::Weave { format, out } => cmd_weave(ui, &project, *format, out.as_deref()),
        Command::Doctest {
            evaluator,
            jobs,
            timeout,
            targets,
        } => cmd_doctest(ui, &project, evaluator.as_deref(), *jobs, *timeout, targets),
        Command::Context(args) => cmd_context(ui, &project, args),
        Command::Obfuscate {
            names,
            seed,
            map_out,
            out,
            reverse,
        } => cmd_obfuscate(
            ui,
            &project,
            names.as_deref(),
            *seed,
            map_out.as_deref(),
            out.as_deref(),
            reverse.as_deref(),
        ),
        Command::Graph { dot, from } => cmd_graph(ui, &project, *dot, from.as_deref()),
        Command::Generate {
            context,
            place,
            replay,
            file,
        } => cmd_generate(
            ui,
            &project,
            context,
            place.as_deref(),
            replay.as_deref(),
            file.as_deref(),
        ),
        Command::Detangle { root } => cmd_detangle(ui, &project, root.as_deref()),
        Command::Drift { root } => cmd_drift(ui, &project, root.as_deref()),
    }
}

fn cmd_check(ui: &mut Ui, project: &Project) -> Result<i32> {
    let diags = validate(&project.set);
    for d in &diags {
        ui.diagnostic(Some(&project.config), d)?;
    }
    Ok(if validate::is_clean(&diags) {
        EXIT_OK
    } else {
        EXIT_FAILURE
    })
}

fn cmd_tangle(ui: &mut Ui, project: &Project, out: Option<&Path>, markers: bool) -> Result<i32> {
    require_valid(ui, project)?;
    let root = out.map_or_else(|| project.config.out_root.clone(), Path::to_path_buf);
    let (output, report) =
        tangle::tangle_project(&project.set, &root, markers).map_err(tangle_error)?;
    for w in &output.warnings {
        ui.diagnostic(Some(&project.config), w)?;
    }
    for path in &report.written {
        let shown = config::shown(&root.join(path));
        if ui.json {
            ui.record(json!({"type": "tangle", "path": shown, "status": "written"}))?;
        } else {
            ui.line(&format!("wrote {shown}"))?;
        }
    }
    if ui.json {
        for path in &report.unchanged {
            let shown = config::shown(&root.join(path));
            ui.record(json!({"type": "tangle", "path": shown, "status": "unchanged"}))?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_weave(ui: &mut Ui, project: &Project, format: Format, out: Option<&Path>) -> Result<i32> {
    require_valid(ui, project)?;
    let woven = weave(
        &project.set,
        match format {
            Format::Md => WeaveFormat::Md,
            Format::Html => WeaveFormat::Html,
        },
    );
    if let Some(path) = out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))?;
        }
        fs::write(path, &woven.body).with_context(|| format!("cannot write {}", path.display()))?;
    }
    if ui.json {
        ui.record(json!({
            "type": "weave",
            "format": if format == Format::Md { "md" } else { "html" },
            "out": out.map(display_path),
            "body": if out.is_none() { Some(&woven.body) } else { None },
        }))?;
        for entry in &woven.index_entries {
            let mut value = serde_json::to_value(entry)?;
            value["type"] = json!("index-entry");
            ui.record(value)?;
        }
    } else if out.is_none() {
        write!(ui.out, "{}", woven.body)?;
    }
    Ok(EXIT_OK)
}

fn cmd_doctest(
    ui: &mut Ui,
    project: &Project,
    evaluator: Option<&str>,
    jobs: Option<usize>,
    timeout: Option<u64>,
    targets: &[String],
) -> Result<i32> {
    require_valid(ui, project)?;
    let command = evaluator
        .map(str::to_string)
        .or_else(|| project.config.raw.evaluator.clone())
        .ok_or_else(|| {
            EnvironmentError(
                "no evaluator configured; pass --evaluator or set `evaluator` in ilp.json".into(),
            )
        })?;
    let command = EvaluatorCommand::parse(&command)
        .map_err(|e| UsageError(format!("bad evaluator command: {e}")))?;
    for t in targets {
        if project.set.annotation(t).is_none() {
            return Err(UsageError(format!("`{t}` has no define-with-docs annotation")).into());
        }
    }
    let (cases, diags) = extract_tests(&project.set, (!targets.is_empty()).then_some(targets));
    for d in &diags {
        ui.diagnostic(Some(&project.config), d)?;
    }
    let mut options = RunOptions::default();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(UsageError("--jobs must be at least 1".into()).into());
        }
        options.workers = j;
    }
    if let Some(secs) = timeout {
        options.timeout = Duration::from_secs(secs);
    }
    let root = &project.config.root;
    options.cwd = (!root.as_os_str().is_empty()).then(|| root.clone());
    let report = run_tests(&cases, &command, &options);
    if report.evaluator_missing {
        return Err(EnvironmentError(format!(
            "evaluator `{}` could not be started",
            command.program
        ))
        .into());
    }
    for r in &report.results {
        if ui.json {
            let mut value = serde_json::to_value(r)?;
            value["type"] = json!("test");
            ui.record(value)?;
            continue;
        }
        let line = match r.status {
            TestStatus::Pass => format!("PASS {}", r.label),
            TestStatus::Fail => format!(
                "FAIL {}: expected #t, got {:?}",
                r.label,
                r.stdout.trim_end()
            ),
            TestStatus::Error => {
                format!("ERROR {}: {}", r.label, r.message.as_deref().unwrap_or(""))
            }
            TestStatus::Skipped => {
                format!("SKIP {}: {}", r.label, r.message.as_deref().unwrap_or(""))
            }
        };
        ui.line(&line)?;
    }
    if ui.json {
        ui.record(json!({
            "type": "summary",
            "pass": report.pass,
            "fail": report.fail,
            "error": report.error,
            "skipped": report.skipped,
        }))?;
    } else {
        ui.line(&format!(
            "{} passed; {} failed; {} errors; {} skipped",
            report.pass, report.fail, report.error, report.skipped
        ))?;
    }
    Ok(if report.is_success() {
        EXIT_OK
    } else {
        EXIT_FAILURE
    })
}

fn load_template(config: &ProjectConfig, name: &str) -> Result<Template> {
    if let Ok(t) = Template::builtin(name) {
        return Ok(t);
    }
    let mut candidates = Vec::new();
    if let Some(dir) = &config.templates_dir {
        candidates.push(dir.join(format!("{name}.txt")));
        candidates.push(dir.join(name));
    }
    candidates.push(PathBuf::from(name));
    let path = candidates
        .into_iter()
        .find(|p| p.is_file())
        .ok_or_else(|| UsageError(format!("unknown template `{name}`")))?;
    let text =
        fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    Template::parse(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

fn context_error(e: ContextError) -> anyhow::Error {
    UsageError(e.to_string()).into()
}

#[derive(Serialize)]
struct SegmentSummary<'a> {
    role: String,
    name: &'a str,
    cost: usize,
    source: String,
}

fn cmd_context(ui: &mut Ui, project: &Project, args: &ContextArgs) -> Result<i32> {
    require_valid(ui, project)?;
    let template = load_template(&project.config, &args.template)?;
    let graph = build_graph(&project.set);
    let bundle =
        pack_context(&project.set, &graph, &args.target, args.budget).map_err(context_error)?;
    let language = args
        .language
        .clone()
        .unwrap_or_else(|| project.config.raw.default_language.clone());
    let prompt = render_prompt(&bundle, &template, &language);
    if ui.json {
        let segments: Vec<SegmentSummary> = bundle
            .segments
            .iter()
            .map(|s| SegmentSummary {
                role: s.role.to_string(),
                name: &s.name,
                cost: s.cost,
                source: format!(
                    "{}:{}",
                    project.config.shown(&s.source.document_path),
                    s.source.line_start
                ),
            })
            .collect();
        ui.record(json!({
            "type": "context",
            "target": bundle.target,
            "budget": bundle.budget,
            "total_cost": bundle.total_cost(),
            "segments": segments,
            "prompt": prompt,
        }))?;
    } else {
        write!(ui.out, "{prompt}")?;
        if !prompt.ends_with('\n') {
            writeln!(ui.out)?;
        }
    }
    Ok(EXIT_OK)
}

/// `name` or `name<TAB>replacement` per line; `#` starts a comment line.
pub fn parse_names_file(text: &str) -> Result<Vec<(String, Option<String>)>, String> {
    let mut requests = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (name, replacement) = match line.split_once('\t') {
            Some((n, r)) => (n.trim(), Some(r.trim().to_string())),
            None => (line.trim(), None),
        };
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(format!(
                "line {}: expected a name, optionally followed by a tab and its replacement",
                i + 1
            ));
        }
        requests.push((name.to_string(), replacement));
    }
    Ok(requests)
}

fn write_documents(config: &ProjectConfig, set: &DocumentSet, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for doc in &set.documents {
        let path = dir.join(&doc.path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))?;
        }
        fs::write(&path, &doc.raw_text)
            .with_context(|| format!("cannot write {}", path.display()))?;
        written.push(path);
    }
    let config_text = serde_json::to_string_pretty(&config.raw)? + "\n";
    let config_path = dir.join(config::CONFIG_NAME);
    fs::write(&config_path, config_text)
        .with_context(|| format!("cannot write {}", config_path.display()))?;
    Ok(written)
}

fn cmd_obfuscate(
    ui: &mut Ui,
    project: &Project,
    names: Option<&Path>,
    seed: Option<u64>,
    map_out: Option<&Path>,
    out: Option<&Path>,
    reverse: Option<&Path>,
) -> Result<i32> {
    require_valid(ui, project)?;
    let dir = out.map_or_else(
        || project.config.out_root.join("obfuscated"),
        Path::to_path_buf,
    );
    let (renamed, mapping) = if let Some(map_path) = reverse {
        let text = fs::read_to_string(map_path)
            .with_context(|| format!("cannot read {}", map_path.display()))?;
        let mapping = RenameMapping::parse_file(&text)
            .map_err(|e| UsageError(format!("{}: {e}", map_path.display())))?;
        let inverse = mapping.inverse();
        (apply_mapping(&project.set, &inverse)?, inverse)
    } else {
        let names = names.ok_or_else(|| UsageError("--names is required".into()))?;
        let seed = seed.ok_or_else(|| UsageError("--seed is required".into()))?;
        let text = fs::read_to_string(names)
            .with_context(|| format!("cannot read {}", names.display()))?;
        let requests =
            parse_names_file(&text).map_err(|e| UsageError(format!("{}: {e}", names.display())))?;
        obfuscate_with(&project.set, &requests, seed)?
    };
    let written = write_documents(&project.config, &renamed, &dir)?;
    match map_out {
        Some(path) => fs::write(path, mapping.to_file_text())
            .with_context(|| format!("cannot write {}", path.display()))?,
        None if !ui.json => write!(ui.out, "{}", mapping.to_file_text())?,
        None => {}
    }
    if ui.json {
        for (from, to) in &mapping.pairs {
            ui.record(json!({"type": "rename", "from": from, "to": to}))?;
        }
        for path in &written {
            ui.record(json!({"type": "document", "path": config::shown(path)}))?;
        }
    } else {
        for path in &written {
            writeln!(ui.err, "wrote {}", config::shown(path))?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_graph(ui: &mut Ui, project: &Project, dot: bool, from: Option<&str>) -> Result<i32> {
    require_valid(ui, project)?;
    let graph = build_graph(&project.set);
    if let Some(name) = from {
        let layers = graph
            .reachable_layers(name, &EdgeKind::HARD, None)
            .map_err(|e| UsageError(e.to_string()))?;
        for (depth, layer) in layers.iter().enumerate() {
            let names: Vec<&str> = layer.iter().map(|n| n.as_str()).collect();
            if ui.json {
                ui.record(json!({"type": "layer", "depth": depth + 1, "nodes": names}))?;
            } else {
                ui.line(&format!("{}: {}", depth + 1, names.join(" ")))?;
            }
        }
        return Ok(EXIT_OK);
    }
    if ui.json {
        for (id, info) in &graph.nodes {
            ui.record(json!({"type": "node", "id": id, "roles": info.roles}))?;
        }
        for e in &graph.edges {
            ui.record(json!({
                "type": "edge",
                "from": e.from,
                "to": e.to,
                "kind": e.kind,
                "path": project.config.shown(&e.span.document_path),
                "line": e.span.line_start,
            }))?;
        }
    } else if dot {
        write!(ui.out, "{}", graph.to_dot())?;
    } else {
        write!(ui.out, "{}", describe(&graph))?;
    }
    Ok(EXIT_OK)
}

fn llm_error(e: LlmError) -> anyhow::Error {
    match e {
        LlmError::MissingEndpoint
        | LlmError::Transport(_)
        | LlmError::Status { .. }
        | LlmError::Replay { .. } => EnvironmentError(e.to_string()).into(),
        other => anyhow!(other),
    }
}

fn cmd_generate(
    ui: &mut Ui,
    project: &Project,
    args: &ContextArgs,
    place: Option<&str>,
    replay: Option<&Path>,
    file: Option<&str>,
) -> Result<i32> {
    require_valid(ui, project)?;
    let set = &project.set;
    let placement = match place {
        Some(spec) => Placement::resolve(set, spec).map_err(|e| UsageError(e.to_string()))?,
        None => {
            let spec = set.step_spec(&args.target).ok_or_else(|| {
                UsageError(format!(
                    "--place is required: `{}` has no step specification to attach to",
                    args.target
                ))
            })?;
            Placement::Anchor {
                doc: Some(display_path(&spec.span.document_path)),
                anchor: spec.heading_anchor.clone(),
            }
        }
    };
    let template = load_template(&project.config, &args.template)?;
    let graph = build_graph(set);
    let bundle = pack_context(set, &graph, &args.target, args.budget).map_err(context_error)?;
    let provider: Box<dyn CompletionProvider> = match replay {
        Some(path) => Box::new(ReplayProvider::load(path).map_err(llm_error)?),
        None => Box::new(HttpProvider::from_env().map_err(llm_error)?),
    };
    let language = args
        .language
        .clone()
        .unwrap_or_else(|| project.config.raw.default_language.clone());
    let generated =
        generate_for_target(provider.as_ref(), &bundle, &template, &language).map_err(llm_error)?;
    for w in &generated.warnings {
        ui.warning(w)?;
    }
    let merged = merge_generated(set, &generated, &placement, file)
        .map_err(|e| UsageError(e.to_string()))?;
    for w in &merged.warnings {
        ui.diagnostic(Some(&project.config), w)?;
    }
    let doc = &merged.set.documents[merged.document];
    let path = project.config.resolve(&doc.path);
    fs::write(&path, &doc.raw_text).with_context(|| format!("cannot write {}", path.display()))?;
    if ui.json {
        ui.record(json!({
            "type": "generated",
            "chunk": merged.chunk_name,
            "document": config::shown(&path),
            "file": merged.file_target,
            "provider": generated.provenance.provider,
            "prompt_sha256": generated.provenance.prompt_digest,
            "timestamp": generated.provenance.timestamp,
        }))?;
    } else {
        ui.line(&format!(
            "added chunk `{}` to {} (tangles to {})",
            merged.chunk_name,
            config::shown(&path),
            merged.file_target
        ))?;
    }
    Ok(EXIT_OK)
}

fn cmd_detangle(ui: &mut Ui, project: &Project, root: Option<&Path>) -> Result<i32> {
    require_valid(ui, project)?;
    let root = root.map_or_else(|| project.config.out_root.clone(), Path::to_path_buf);
    let result = match tangle::detangle(&project.set, &root) {
        Ok(r) => r,
        Err(DetangleFailure::Refused(errors)) => {
            for e in errors {
                let d = Diagnostic {
                    path: root.join(&e.path),
                    byte_offset: 0,
                    line: e.line,
                    severity: ilp_forge::Severity::Error,
                    message: e.message,
                };
                ui.diagnostic(None, &d)?;
            }
            return Ok(EXIT_FAILURE);
        }
        Err(DetangleFailure::Tangle(e)) => return Err(tangle_error(e)),
    };
    for &i in &result.changed_documents {
        let doc = &result.set.documents[i];
        let path = project.config.resolve(&doc.path);
        fs::write(&path, &doc.raw_text)
            .with_context(|| format!("cannot write {}", path.display()))?;
        let chunks: Vec<&str> = result
            .edits
            .iter()
            .filter(|e| e.chunk.doc == i)
            .map(|e| e.chunk_id.as_str())
            .collect();
        if ui.json {
            ui.record(
                json!({"type": "detangle", "document": config::shown(&path), "chunks": chunks}),
            )?;
        } else {
            ui.line(&format!(
                "updated {} ({})",
                config::shown(&path),
                chunks.join(", ")
            ))?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_drift(ui: &mut Ui, project: &Project, root: Option<&Path>) -> Result<i32> {
    require_valid(ui, project)?;
    let root = root.map_or_else(|| project.config.out_root.clone(), Path::to_path_buf);
    let reports = check_drift(&project.set, &root).map_err(tangle_error)?;
    let mut clean = true;
    for r in &reports {
        clean &= r.status == DriftStatus::InSync;
        let shown = config::shown(&root.join(&r.path));
        if ui.json {
            let mut value = serde_json::to_value(r)?;
            value["type"] = json!("drift");
            value["path"] = json!(shown);
            ui.record(value)?;
        } else {
            let status = match r.status {
                DriftStatus::InSync => "in sync".to_string(),
                DriftStatus::Modified {
                    first_differing_line,
                } => {
                    format!("modified (first difference at line {first_differing_line})")
                }
                DriftStatus::Missing => "missing".to_string(),
                DriftStatus::Extra => "extra (no longer produced)".to_string(),
            };
            ui.line(&format!("{shown}: {status}"))?;
        }
    }
    Ok(if clean { EXIT_OK } else { EXIT_FAILURE })
}
