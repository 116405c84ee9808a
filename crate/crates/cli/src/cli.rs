//! Argument grammar and subcommand dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use seqdep::eval::{corpus_files, corpus_stats, gen_corpus, CorpusParams, PerturbParams};
use seqdep::export::{export_graph, GraphFormat, GraphRef, SCHEMA_VERSION};
use seqdep::llm::{build_prompt, Transport};
use seqdep::{build_edg, parse_document, Analysis, DependencyEdge, Diagnostic, Document};

use crate::config::{EngineArgs, RunConfig, DEFAULT_ADDR};
use crate::ops::{self, usage, EdgeSet};
use crate::server::{self, AppState};
use crate::workspace::Workspace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "seqdep", version, about = "Data dependency inference for enhanced sequence diagrams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
    Dot,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a file and report diagnostics.
    Parse {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Export the execution dependency graph of a use case.
    Edg {
        file: PathBuf,
        #[arg(long)]
        usecase: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Dot)]
        format: Format,
    },
    /// Reachable predecessors of a target and the context reduction ratio.
    Prune {
        file: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long)]
        usecase: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Infer dependencies of one target, or of every node.
    Infer {
        file: PathBuf,
        #[arg(long, conflicts_with = "all")]
        target: Option<String>,
        /// Global inference over the use case (the default without --target).
        #[arg(long)]
        all: bool,
        #[arg(long)]
        usecase: Option<String>,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Check design rules and either the rule engine's results or a given
    /// edge set.
    Validate {
        file: PathBuf,
        /// Edge list to check instead of the rule engine's output.
        #[arg(long, value_name = "FILE")]
        edges: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Score predictions against gold annotations.
    Eval {
        /// ESD files; needed when predictions come from an engine.
        files: Vec<PathBuf>,
        #[arg(long, value_name = "FILE")]
        gold: Vec<PathBuf>,
        #[arg(long, value_name = "FILE")]
        pred: Vec<PathBuf>,
        /// Directory holding NAME.esd, NAME.gold.json and optional NAME.pred.json.
        #[arg(long, value_name = "DIR")]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Render the inference prompt for a target.
    Prompt {
        file: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long)]
        usecase: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Write a seeded synthetic corpus.
    GenCorpus {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "corpus")]
        out: PathBuf,
        #[arg(long, default_value_t = CorpusParams::default().n_usecases)]
        n_usecases: usize,
        #[arg(long, default_value_t = CorpusParams::default().max_nodes)]
        max_nodes: usize,
        #[arg(long, default_value_t = CorpusParams::default().max_depth)]
        max_depth: usize,
        #[arg(long, default_value_t = CorpusParams::default().p_alt)]
        p_alt: f64,
        #[arg(long, default_value_t = CorpusParams::default().p_table)]
        p_table: f64,
        #[arg(long, default_value_t = PerturbParams::default().p_drop)]
        p_drop: f64,
        #[arg(long, default_value_t = PerturbParams::default().p_retarget)]
        p_retarget: f64,
        #[arg(long, default_value_t = PerturbParams::default().p_add)]
        p_add: f64,
    },
    /// Serve the HTTP JSON API over a workspace directory.
    Serve {
        #[arg(long, default_value = ".")]
        workspace: PathBuf,
        #[arg(long, default_value = DEFAULT_ADDR)]
        addr: String,
        #[command(flatten)]
        engine: EngineArgs,
    },
}

/// A failed command: exit code plus what to print on stderr.
struct Failure {
    code: i32,
    diagnostics: Vec<Diagnostic>,
}

impl Failure {
    fn usage(d: Diagnostic) -> Self {
        Failure {
            code: EXIT_USAGE,
            diagnostics: vec![d],
        }
    }

    fn domain(diagnostics: Vec<Diagnostic>) -> Self {
        Failure {
            code: EXIT_DOMAIN,
            diagnostics,
        }
    }
}

type CmdResult = Result<i32, Failure>;

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn json<T: Serialize>(&mut self, value: &T) {
        let text = serde_json::to_string_pretty(value).expect("report serializes");
        let _ = writeln!(self.out, "{text}");
    }

    fn text(&mut self, text: &str) {
        let _ = write!(self.out, "{text}");
        if !text.ends_with('\n') {
            let _ = writeln!(self.out);
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let mut io = Io { out, err };
    match dispatch(cli.command, &mut io) {
        Ok(code) => code,
        Err(f) => {
            for d in &f.diagnostics {
                let _ = writeln!(io.err, "{}: {d}", if d.is_error() { "error" } else { "warning" });
            }
            f.code
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(usage(format!("cannot read {}: {e}", path.display()))))
}

fn load(path: &Path) -> Result<Document, Failure> {
    let text = read(path)?;
    let mut doc = parse_document(&text).map_err(|f| Failure::domain(f.diagnostics()))?;
    doc.source_path = path.display().to_string();
    Ok(doc)
}

fn select<'d>(doc: &'d Document, name: Option<&str>) -> Result<&'d seqdep::UseCase, Failure> {
    ops::select_usecase(doc, name).map_err(Failure::usage)
}

fn not_supported(format: Format, what: &str) -> Failure {
    Failure::usage(usage(format!(
        "{what} does not support --format {}",
        format.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
    )))
}

fn diag_lines(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| format!("{d}\n")).collect()
}

fn edge_lines(edges: &[DependencyEdge]) -> String {
    edges.iter().map(|e| format!("{e}\n")).collect()
}

fn code_for(errors: bool) -> i32 {
    if errors {
        EXIT_DOMAIN
    } else {
        EXIT_OK
    }
}

fn transport_for(config: &RunConfig) -> Result<Option<Arc<dyn Transport>>, Failure> {
    config.validate().map_err(Failure::usage)?;
    config.build_transport().map_err(Failure::usage)
}

fn dispatch(command: Command, io: &mut Io<'_>) -> CmdResult {
    match command {
        Command::Parse { file, format } => {
            let report = ops::parse_report(&read(&file)?, false);
            match format {
                Format::Json => io.json(&report),
                Format::Text => {
                    let head = if report.ok { "ok" } else { "failed" };
                    io.text(&format!("{head}: {}\n{}", report.usecases.join(", "), diag_lines(&report.diagnostics)));
                }
                Format::Dot => return Err(not_supported(format, "parse")),
            }
            Ok(code_for(!report.ok))
        }
        Command::Edg { file, usecase, format } => {
            let doc = load(&file)?;
            let edg = build_edg(select(&doc, usecase.as_deref())?);
            let g = match format {
                Format::Dot => GraphFormat::Dot,
                Format::Json => GraphFormat::Json,
                Format::Text => return Err(not_supported(format, "edg")),
            };
            io.text(&export_graph(GraphRef::Edg(&edg), g));
            Ok(EXIT_OK)
        }
        Command::Prune { file, target, usecase, format } => {
            let doc = load(&file)?;
            let analysis = Analysis::new(&doc, select(&doc, usecase.as_deref())?);
            let report = ops::prune_report(&analysis, &target).map_err(Failure::usage)?;
            match format {
                Format::Json => io.json(&report),
                Format::Text => {
                    let members: Vec<&str> = report.members.iter().map(|m| m.as_str()).collect();
                    io.text(&format!("{}: {} (ratio {:.4})", report.target, members.join(" "), report.ratio));
                }
                Format::Dot => return Err(not_supported(format, "prune")),
            }
            Ok(EXIT_OK)
        }
        Command::Infer { file, target, all: _, usecase, engine, format } => {
            let doc = load(&file)?;
            let uc = select(&doc, usecase.as_deref())?;
            let config = RunConfig::new(vec![file], &engine);
            let transport = transport_for(&config)?;
            let engine = config.engine(transport.as_deref()).map_err(Failure::usage)?;
            let analysis = Analysis::new(&doc, uc);
            let report = ops::infer(&analysis, target.as_deref(), engine).map_err(Failure::usage)?;
            match format {
                Format::Json => io.json(&report),
                Format::Text => io.text(&format!("{}{}", edge_lines(&report.edges), diag_lines(&report.diagnostics))),
                Format::Dot => io.text(&export_graph(GraphRef::Ddg(&report.graph(uc)), GraphFormat::Dot)),
            }
            Ok(code_for(report.has_errors()))
        }
        Command::Validate { file, edges, format } => {
            let doc = load(&file)?;
            let set = match edges {
                Some(p) => Some(EdgeSet::from_json(&read(&p)?).map_err(Failure::usage)?),
                None => None,
            };
            let report = ops::validate_report(&doc, set.as_ref()).map_err(Failure::usage)?;
            match format {
                Format::Json => io.json(&report),
                Format::Text => io.text(&diag_lines(&report.diagnostics)),
                Format::Dot => return Err(not_supported(format, "validate")),
            }
            Ok(code_for(!report.ok))
        }
        Command::Eval { files, gold, pred, corpus, engine, format } => eval(io, files, gold, pred, corpus, &engine, format),
        Command::Prompt { file, target, usecase, format } => {
            let doc = load(&file)?;
            let analysis = Analysis::new(&doc, select(&doc, usecase.as_deref())?);
            let context = analysis.predecessors(&target).map_err(|e| Failure::usage(e.into()))?;
            let prompt = build_prompt(&analysis, &target, context).map_err(|e| Failure::usage(e.into()))?;
            match format {
                Format::Text => io.text(&prompt.rendered),
                Format::Json => io.json(&prompt),
                Format::Dot => return Err(not_supported(format, "prompt")),
            }
            Ok(EXIT_OK)
        }
        Command::GenCorpus {
            seed,
            out,
            n_usecases,
            max_nodes,
            max_depth,
            p_alt,
            p_table,
            p_drop,
            p_retarget,
            p_add,
        } => {
            let params = CorpusParams {
                n_usecases,
                max_nodes,
                max_depth,
                p_alt,
                p_table,
                perturb: PerturbParams { p_drop, p_retarget, p_add },
            };
            let cases = gen_corpus(seed, &params).map_err(|e| Failure::usage(usage(e.to_string())))?;
            std::fs::create_dir_all(&out)
                .map_err(|e| Failure::usage(usage(format!("cannot create {}: {e}", out.display()))))?;
            let files = corpus_files(&cases);
            for (name, text) in &files {
                let path = out.join(name);
                std::fs::write(&path, text)
                    .map_err(|e| Failure::usage(usage(format!("cannot write {}: {e}", path.display()))))?;
            }
            let stats: Vec<_> = cases
                .iter()
                .map(|c| serde_json::json!({ "usecase": c.name(), "stats": corpus_stats(c) }))
                .collect();
            io.json(&serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "seed": seed,
                "out": out.display().to_string(),
                "params": params,
                "files": files.keys().collect::<Vec<_>>(),
                "usecases": stats,
            }));
            Ok(EXIT_OK)
        }
        Command::Serve { workspace, addr, engine } => {
            if !workspace.is_dir() {
                return Err(Failure::usage(usage(format!("{} is not a directory", workspace.display()))));
            }
            let mut config = RunConfig::new(vec![workspace.clone()], &engine);
            config.addr = addr;
            // The llm engine stays available per request only when a
            // transport is configured.
            let transport = config.build_transport().map_err(Failure::usage)?;
            let state = Arc::new(AppState {
                workspace: Workspace::new(workspace),
                transport,
                params: config.params,
                max_in_flight: config.max_in_flight,
            });
            let err = &mut *io.err;
            server::serve(&config.addr, state, |local| {
                let _ = writeln!(err, "listening on http://{local}");
            })
            .map_err(|e| Failure::domain(vec![usage(e.to_string())]))?;
            Ok(EXIT_OK)
        }
    }
}

fn eval(
    io: &mut Io<'_>,
    mut files: Vec<PathBuf>,
    mut gold: Vec<PathBuf>,
    mut pred: Vec<PathBuf>,
    corpus: Option<PathBuf>,
    engine: &EngineArgs,
    format: Format,
) -> CmdResult {
    if let Some(dir) = &corpus {
        let entries = std::fs::read_dir(dir)
            .map_err(|e| Failure::usage(usage(format!("cannot read {}: {e}", dir.display()))))?;
        let mut names: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        names.sort();
        for p in names {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            if name.ends_with(".gold.json") {
                gold.push(p);
            } else if name.ends_with(".pred.json") {
                pred.push(p);
            } else if name.ends_with(".esd") {
                files.push(p);
            }
        }
    }
    if gold.is_empty() {
        return Err(Failure::usage(usage("eval needs at least one --gold file or --corpus")));
    }
    let docs: Vec<Document> = files.iter().map(|f| load(f)).collect::<Result<_, _>>()?;
    let read_set = |p: &PathBuf| -> Result<EdgeSet, Failure> { EdgeSet::from_json(&read(p)?).map_err(Failure::usage) };
    let golds: Vec<EdgeSet> = gold.iter().map(read_set).collect::<Result<_, _>>()?;
    let preds: Vec<EdgeSet> = pred.iter().map(read_set).collect::<Result<_, _>>()?;

    // Without a name, a lone gold file pairs with a lone use case or prediction.
    let single_usecase = match docs.as_slice() {
        [d] if d.usecases.len() == 1 => Some(d.usecases[0].name.clone()),
        _ => None,
    };
    let name_of = |set: &EdgeSet| set.usecase.clone().or_else(|| single_usecase.clone());

    let config = RunConfig::new(files.clone(), engine);
    let mut transport = None;
    let mut cases = Vec::new();
    for (i, g) in golds.iter().enumerate() {
        let name = name_of(g).unwrap_or_else(|| format!("case{:02}", i + 1));
        let matching = preds.iter().find(|p| name_of(p).as_deref() == Some(name.as_str()));
        let predicted = match matching {
            Some(p) => p.edges.clone(),
            None if golds.len() == 1 && preds.len() == 1 => preds[0].edges.clone(),
            None => {
                let (doc, uc) = docs
                    .iter()
                    .find_map(|d| d.usecases.iter().find(|u| u.name == name).map(|u| (d, u)))
                    .ok_or_else(|| {
                        Failure::usage(usage(format!("no prediction and no ESD file for use case `{name}`")))
                    })?;
                if transport.is_none() {
                    transport = Some(transport_for(&config)?);
                }
                let t = transport.as_ref().and_then(|t| t.as_deref());
                let engine = config.engine(t).map_err(Failure::usage)?;
                ops::infer(&Analysis::new(doc, uc), None, engine).map_err(Failure::usage)?.edges
            }
        };
        cases.push((name, predicted, g.edges.clone()));
    }
    let output = ops::eval_output(&cases);
    match format {
        Format::Json => io.json(&output),
        Format::Text => io.text(&output.report.to_table()),
        Format::Dot => return Err(not_supported(format, "eval")),
    }
    Ok(EXIT_OK)
}
