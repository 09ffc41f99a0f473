//! The `csl` command line.
//!
//! Exit codes: 0 no checker failed, 1 at least one FAIL, 2 input, validation
//! or I/O problems.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkers::{run_all, Verdict};
use crate::emitter::emit_tla;
use crate::explorer::{explore, Bounds, ExploreOptions};
use crate::fixtures::{oracle_enumerate, FixtureExpectation};
use crate::injector::{inject, Mutation};
use crate::model::{validate_model, ContractModel, Severity};
use crate::report::ReportDocument;

#[derive(Parser)]
#[command(name = "csl", version, about = "Explore and check contract state-machine models")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ExploreArgs {
    /// Maximum number of states to visit.
    #[arg(long, default_value_t = 1_000_000)]
    bound: usize,
    /// Maximum BFS depth.
    #[arg(long, default_value_t = 1000)]
    depth: usize,
    /// Exploration threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl ExploreArgs {
    fn options(&self) -> ExploreOptions {
        ExploreOptions { bounds: Bounds { max_states: self.bound, max_depth: self.depth }, workers: self.workers }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Explore a model and run every checker.
    Check {
        file: PathBuf,
        #[command(flatten)]
        explore: ExploreArgs,
        /// JSON report.
        #[arg(long, conflicts_with = "text")]
        json: bool,
        /// Text report (default).
        #[arg(long)]
        text: bool,
    },
    /// Write the model as a TLA+ module plus a .cfg next to it.
    EmitTla {
        file: PathBuf,
        #[arg(short = 'o', long = "output")]
        out: PathBuf,
    },
    /// Plant one flaw and write the mutated model.
    Inject {
        file: PathBuf,
        /// Kind[@target][=param]
        #[arg(long)]
        mutation: String,
        #[arg(short = 'o', long = "output")]
        out: PathBuf,
    },
    /// Explore a model and print graph statistics.
    Explore {
        file: PathBuf,
        #[arg(long)]
        stats: bool,
        #[command(flatten)]
        explore: ExploreArgs,
    },
    /// Brute-force reference enumeration; prints expectation JSON.
    Oracle {
        file: PathBuf,
        #[arg(long)]
        mutation: Option<String>,
    },
}

struct Failure(String);

fn load(path: &Path) -> Result<ContractModel, Failure> {
    let src = std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let model = crate::parse(&src).map_err(|e| Failure(e.in_file(path).to_string()))?;
    let errors: Vec<String> = validate_model(&model)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .map(|d| format!("{}: {}: {}", path.display(), d.rule, d.message))
        .collect();
    if errors.is_empty() {
        Ok(model)
    } else {
        Err(Failure(errors.join("\n")))
    }
}

fn mutation(text: &str) -> Result<Mutation, Failure> {
    Mutation::parse(text).ok_or_else(|| Failure(format!("bad mutation '{text}', expected Kind[@target][=param]")))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure(format!("cannot write {}: {e}", path.display())))
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<i32, Failure> {
    match cmd {
        Cmd::Check { file, explore: ex, json, text: _ } => {
            let model = load(&file)?;
            let graph = explore(&model, &ex.options());
            let report = run_all(&model, &graph);
            let doc = ReportDocument::new(&model, &report);
            print!("{}", if json { doc.to_json() } else { doc.to_text() });
            if report.has_failure() {
                return Ok(1);
            }
            if report.verdicts.iter().any(|(_, v)| matches!(v, Verdict::Skipped(_))) {
                eprintln!("warning: some checks were skipped; see the report");
            }
            Ok(0)
        }
        Cmd::EmitTla { file, out } => {
            let model = load(&file)?;
            let tla = emit_tla(&model);
            let cfg = out.with_extension("cfg");
            write(&out, &tla.text)?;
            if let Err(e) = write(&cfg, &tla.cfg) {
                let _ = std::fs::remove_file(&out);
                return Err(e);
            }
            Ok(0)
        }
        Cmd::Inject { file, mutation: text, out } => {
            let model = load(&file)?;
            let mutated = inject(&model, &mutation(&text)?).map_err(|e| Failure(e.to_string()))?;
            write(&out, &crate::render(&mutated))?;
            Ok(0)
        }
        Cmd::Explore { file, stats: _, explore: ex } => {
            let model = load(&file)?;
            let graph = explore(&model, &ex.options());
            println!("nodes: {}", graph.nodes.len());
            println!("edges: {}", graph.edges.len());
            println!("max_depth: {}", graph.max_depth());
            println!("truncated: {}", graph.truncated);
            println!("bound_errors: {}", graph.bound_errors.len());
            Ok(0)
        }
        Cmd::Oracle { file, mutation: text } => {
            let mut model = load(&file)?;
            if let Some(s) = text {
                model = inject(&model, &mutation(&s)?).map_err(|e| Failure(e.to_string()))?;
            }
            let r = oracle_enumerate(&model).map_err(|e| Failure(e.to_string()))?;
            let name = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let exp = FixtureExpectation::from_oracle(&name, &r);
            println!("{}", serde_json::to_string_pretty(&exp).expect("serializes"));
            Ok(0)
        }
    }
}
