//! Command line front end. Log verbosity comes from `HOLOBENCH_LOG`
//! (env_logger syntax, e.g. `HOLOBENCH_LOG=debug`).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use holobench::harness::{self, RunOptions};
use holobench::load_model;
use holobench::scenario::{load_scenario, ScenarioContext};

#[derive(Parser)]
#[command(name = "holobench", version, about = "Deterministic benchmark harness for holonic manufacturing control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario of a suite for every seed and write artifacts.
    Run {
        suite: PathBuf,
        /// Output directory (default: results/<suite name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds, replacing the suite's list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Tick cap, replacing the suite's.
        #[arg(long)]
        cap: Option<u64>,
        /// Overwrite a previous run's artifacts.
        #[arg(long)]
        force: bool,
    },
    /// Print the baseline comparison of a finished run directory.
    Compare { dir: PathBuf },
    /// Check a scenario or model document.
    Validate { document: PathBuf },
}

const OK: u8 = 0;
const INVALID_INPUT: u8 = 1;
const RUN_FAILURE: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HOLOBENCH_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { INVALID_INPUT } else { OK });
        }
    };
    let code = match cli.command {
        Command::Run {
            suite,
            out,
            seeds,
            cap,
            force,
        } => run(&suite, out, seeds, cap, force),
        Command::Compare { dir } => match harness::compare_dir(&dir) {
            Ok(table) => {
                print!("{}", table.summary());
                OK
            }
            Err(e) => fail(e),
        },
        Command::Validate { document } => validate(&document),
    };
    ExitCode::from(code)
}

fn fail(e: harness::HarnessError) -> u8 {
    eprintln!("error: {e}");
    e.exit_code() as u8
}

fn run(suite_path: &Path, out: Option<PathBuf>, seeds: Option<Vec<u64>>, cap: Option<u64>, force: bool) -> u8 {
    let suite = match harness::load_suite(suite_path) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let out = out.unwrap_or_else(|| Path::new("results").join(&suite.document.name));
    let options = RunOptions {
        tick_cap: cap.unwrap_or(suite.document.tick_cap),
        ..RunOptions::default()
    };
    match harness::run_suite(&suite, seeds.as_deref(), &options, &out, force) {
        Ok(outcome) => {
            match &outcome.table {
                Ok(table) => print!("{}", table.summary()),
                Err(e) => eprintln!("warning: no comparison: {e}"),
            }
            println!("artifacts in {}", out.display());
            if outcome.all_ok() {
                OK
            } else {
                eprintln!("error: some runs did not complete");
                RUN_FAILURE
            }
        }
        Err(e) => fail(e),
    }
}

/// Scenarios are checked against `model.json` / `orders.json` found next to
/// them or one directory up, when present.
fn validate(path: &Path) -> u8 {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return INVALID_INPUT;
        }
    };
    let looks_like_model = serde_json::from_str::<serde_json::Value>(&text)
        .map(|v| v.get("machines").is_some())
        .unwrap_or(false);
    let result = if looks_like_model {
        load_model(&text).map(|m| format!("model ok, hash {}", m.hash())).map_err(|e| e.to_string())
    } else {
        let context = scenario_context(path);
        load_scenario(&text, &context)
            .map(|s| format!("scenario {} ok ({} rules)", s.id, s.rules.len()))
            .map_err(|e| e.to_string())
    };
    match result {
        Ok(message) => {
            println!("{message}");
            OK
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            INVALID_INPUT
        }
    }
}

fn scenario_context(path: &Path) -> ScenarioContext {
    let dir = path.parent().unwrap_or(Path::new("."));
    for candidate in [dir.to_path_buf(), dir.join("..")] {
        let Ok(model_text) = std::fs::read_to_string(candidate.join("model.json")) else {
            continue;
        };
        let Ok(model) = load_model(&model_text) else {
            continue;
        };
        let orders = std::fs::read_to_string(candidate.join("orders.json"))
            .ok()
            .and_then(|t| holobench::control::parse_order_book(&t).ok())
            .unwrap_or_default();
        return ScenarioContext::new(&model, &orders);
    }
    ScenarioContext::unconstrained()
}
