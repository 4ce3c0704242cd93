//! Runs the shipped MiniCell suite into a temporary directory and prints the
//! comparison against the baseline.

use holobench::fixtures::minicell_dir;
use holobench::harness::{load_suite, run_suite, RunOptions};

fn main() {
    let suite = load_suite(&minicell_dir().join("suite.json")).unwrap();
    let out = std::env::temp_dir().join(format!("holobench-example-{}", std::process::id()));
    let outcome = run_suite(&suite, None, &RunOptions::default(), &out, true).unwrap();
    match &outcome.table {
        Ok(table) => print!("{}", table.summary()),
        Err(e) => println!("no comparison: {e}"),
    }
    println!("{} runs, all ok: {}", outcome.runs.len(), outcome.all_ok());
    println!("model {}", outcome.manifest.environment.model_hash);
    println!("artifacts in {}", out.display());
}
