//! `leakaudit` command-line tool.
//!
//! Exit codes: 0 success (audit gate passed), 2 audit gate failed, 1 any
//! execution error. Human-readable output goes to stdout; JSON goes only to
//! the file named by `--json-out` (or `--report-out`).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_GATE: u8 = 2;

/// Directory holding an optional `presets.json` that replaces the bundled
/// split presets.
pub const CONFIG_DIR_ENV: &str = "LEAKAUDIT_CONFIG_DIR";

#[derive(Parser)]
#[command(name = "leakaudit", version, about = "Audit labeled tweet datasets for time and text leakage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct DataArgs {
    /// Dataset file (.jsonl or .csv).
    pub data: PathBuf,
    /// Manifest JSON; defaults to `<data>.manifest.json` next to the data if present.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the id-digit test, keyword scan and duplicate scan; exit 2 if leaky.
    Audit(commands::AuditArgs),
    /// Generate a split file from a preset or explicit options.
    Split(commands::SplitArgs),
    /// List the available split presets.
    Presets,
    /// Score a prediction file on a split.
    Eval(commands::EvalArgs),
    /// Turn tweet predictions into article predictions by majority vote.
    Aggregate(commands::AggregateArgs),
    /// Replace non-anchor records with time-matched pool records.
    Rebalance(commands::RebalanceArgs),
    /// Print a dataset fingerprint and per-label posting-time distances.
    Inspect(commands::InspectArgs),
}

fn main() -> ExitCode {
    // Usage errors must not collide with the gate's exit code 2.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Audit(a) => commands::audit(a),
        Command::Split(a) => commands::split(a).map(|()| EXIT_OK),
        Command::Presets => commands::presets().map(|()| EXIT_OK),
        Command::Eval(a) => commands::eval(a).map(|()| EXIT_OK),
        Command::Aggregate(a) => commands::aggregate(a).map(|()| EXIT_OK),
        Command::Rebalance(a) => commands::rebalance(a).map(|()| EXIT_OK),
        Command::Inspect(a) => commands::inspect(a).map(|()| EXIT_OK),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
