//! Command-line front end. Exit codes: 0 success, 1 for content errors
//! (parse, validation, compile, observation conflicts, inference), 2 for
//! usage and IO errors. Diagnostics go to stderr and name the offending
//! file; command output goes to stdout or `--out`, byte-identical across
//! runs on the same input.

use crate::compiler::{compile, dump_network, parse_overlay, CompileError, CompileOptions, CptOverlay};
use crate::plan_model::{parse_plan_file, validate_library, PlanLibrary};
use crate::recognition::{
    parse_observation_stream, render_report_table, BeliefReport, ObservationKind,
    RecognitionSession,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "plan2bn",
    version,
    about = "Compile hierarchical plan libraries into belief networks and recognize plans from observations"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a plan file and print its validation report.
    Validate {
        plan: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Compile a plan file into a belief network document.
    Compile {
        plan: PathBuf,
        /// JSON file of CPT assignments layered over the defaults.
        #[arg(long, value_name = "FILE")]
        overlay: Option<PathBuf>,
        #[command(flatten)]
        switches: Switches,
        /// Write the network document here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Compile and render the network as a DOT graph.
    DumpDot {
        plan: PathBuf,
        #[arg(long, value_name = "FILE")]
        overlay: Option<PathBuf>,
        #[command(flatten)]
        switches: Switches,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Replay an observation stream, reporting goal beliefs after each one.
    Recognize {
        plan: PathBuf,
        /// Observations, one JSON object per line.
        #[arg(long, value_name = "FILE")]
        obs: PathBuf,
        #[arg(long, value_name = "FILE")]
        overlay: Option<PathBuf>,
        #[command(flatten)]
        switches: Switches,
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        output: OutputFormat,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

/// Structure-generation switches, each disabling one compiler construct.
#[derive(Debug, Clone, Copy, Default, Args)]
struct Switches {
    /// Do not add step-ordering arcs.
    #[arg(long)]
    no_temporal_arcs: bool,
    /// Do not add per-action evidence variables.
    #[arg(long)]
    no_evidence_vars: bool,
    /// Do not add exclusivity arcs between or-branch arms.
    #[arg(long)]
    no_or_inhibition: bool,
    /// Do not add soft exclusion between top-level goals.
    #[arg(long)]
    no_goal_inhibition: bool,
}

impl Switches {
    fn options(self) -> CompileOptions {
        CompileOptions {
            temporal_arcs: !self.no_temporal_arcs,
            explicit_evidence_vars: !self.no_evidence_vars,
            or_branch_inhibition: !self.no_or_inhibition,
            top_level_inhibition: !self.no_goal_inhibition,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Table,
}

struct Failure {
    code: i32,
    message: String,
}

fn usage(message: String) -> Failure {
    Failure { code: 2, message }
}

fn domain(message: String) -> Failure {
    Failure { code: 1, message }
}

struct Outcome {
    /// Command output; goes to `--out` or stdout.
    payload: String,
    /// Human summary; always goes to stderr.
    note: String,
    code: i32,
    out: Option<PathBuf>,
}

impl Outcome {
    fn ok(payload: String, out: Option<PathBuf>) -> Self {
        Outcome { payload, note: String::new(), code: 0, out }
    }
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests land here too; clap knows the code.
            let code = i32::from(e.use_stderr());
            let _ = e.print();
            return if code == 0 { 0 } else { 2 };
        }
    };
    match execute(cli.command) {
        Ok(outcome) => {
            if let Some(path) = &outcome.out {
                if let Err(e) = fs::write(path, &outcome.payload) {
                    eprintln!("cannot write {}: {e}", path.display());
                    return 2;
                }
            } else {
                print!("{}", outcome.payload);
            }
            eprint!("{}", outcome.note);
            outcome.code
        }
        Err(f) => {
            eprintln!("{}", f.message);
            f.code
        }
    }
}

fn execute(command: Command) -> Result<Outcome, Failure> {
    match command {
        Command::Validate { plan, out } => {
            let lib = load_plan(&plan)?;
            let report = validate_library(&lib);
            let mut payload = report.to_json();
            payload.push('\n');
            Ok(Outcome {
                payload,
                note: format!(
                    "{}: {} error(s), {} warning(s)\n",
                    plan.display(),
                    report.errors.len(),
                    report.warnings.len()
                ),
                code: i32::from(!report.is_ok()),
                out,
            })
        }
        Command::Compile { plan, overlay, switches, out } => {
            let (net, map) = build(&plan, overlay.as_deref(), switches)?;
            Ok(Outcome::ok(dump_network(&net, &map), out))
        }
        Command::DumpDot { plan, overlay, switches, out } => {
            let (net, _) = build(&plan, overlay.as_deref(), switches)?;
            Ok(Outcome::ok(net.to_dot(), out))
        }
        Command::Recognize { plan, obs, overlay, switches, output, out } => {
            let (net, map) = build(&plan, overlay.as_deref(), switches)?;
            let stream = parse_observation_stream(&read(&obs)?)
                .map_err(|e| domain(format!("{}: {e}", obs.display())))?;
            let mut session = RecognitionSession::new(net, map, None)
                .map_err(|e| domain(format!("{}: {e}", plan.display())))?;
            let mut payload = String::new();
            for o in &stream {
                let reports = session
                    .observe(o)
                    .map_err(|e| domain(format!("{}: t={}: {e}", obs.display(), o.t)))?;
                render_step(&mut payload, output, o.t, &o.target, &o.kind, &reports);
            }
            Ok(Outcome::ok(payload, out))
        }
    }
}

#[derive(Serialize)]
struct StepRecord<'a> {
    t: u64,
    target: &'a str,
    beliefs: &'a [BeliefReport],
}

fn render_step(
    payload: &mut String,
    output: OutputFormat,
    t: u64,
    target: &str,
    kind: &ObservationKind,
    reports: &[BeliefReport],
) {
    match output {
        OutputFormat::Json => {
            let record = StepRecord { t, target, beliefs: reports };
            payload.push_str(
                &serde_json::to_string(&record).expect("report serialization cannot fail"),
            );
            payload.push('\n');
        }
        OutputFormat::Table => {
            let what = match kind {
                ObservationKind::Outcome(v) => format!("value={v}"),
                ObservationKind::Likelihood(l) => format!("likelihood={l:?}"),
            };
            payload.push_str(&format!("t={t} target={target} {what}\n"));
            payload.push_str(&render_report_table(reports));
            payload.push('\n');
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn load_plan(path: &Path) -> Result<PlanLibrary, Failure> {
    parse_plan_file(&read(path)?).map_err(|e| domain(format!("{}: {e}", path.display())))
}

fn load_overlay(path: Option<&Path>) -> Result<CptOverlay, Failure> {
    match path {
        None => Ok(CptOverlay::empty()),
        Some(p) => parse_overlay(&read(p)?).map_err(|e| domain(format!("{}: {e}", p.display()))),
    }
}

fn build(
    plan: &Path,
    overlay: Option<&Path>,
    switches: Switches,
) -> Result<(crate::bayes_net::BeliefNetwork, crate::compiler::VariableMap), Failure> {
    let lib = load_plan(plan)?;
    let overlay = load_overlay(overlay)?;
    compile(&lib, &overlay, &switches.options()).map_err(|e| match e {
        CompileError::InvalidLibrary { report } => {
            let lines: Vec<String> = report
                .errors
                .iter()
                .map(|d| format!("{}: {}: {}: {}", plan.display(), d.location, d.code, d.message))
                .collect();
            domain(lines.join("\n"))
        }
        other => domain(format!("{}: {other}", plan.display())),
    })
}
