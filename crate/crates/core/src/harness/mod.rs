//! Benchmark campaigns: load a suite, run every (scenario, seed) pair to
//! quiescence, compare against the undisturbed baseline, write artifacts.

mod artifacts;
mod compare;
mod run;
mod suite;

use std::path::PathBuf;

pub use artifacts::{clear_artifacts, run_suite, write_artifacts, Manifest, ManifestRun, SuiteOutcome};
pub use compare::{compare, compare_dir, ComparisonRow, ComparisonTable};
pub use run::{run_scenario, run_with_transport, RunOptions, RunOutcome, RunRecord, RunStatus};
pub use suite::{load_suite, parse_suite, LoadedScenario, LoadedSuite, ScenarioRef, SuiteDocument};

/// Default tick cap when a suite does not set one.
pub const DEFAULT_TICK_CAP: u64 = 1_000_000;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid suite: {0}")]
    Suite(String),
    #[error("duplicate seed {0}")]
    DuplicateSeed(u64),
    #[error("leanness violation: {0}")]
    Leanness(String),
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("no baseline: a comparison needs a run of the null scenario")]
    NoBaseline,
    #[error("nothing to compare: {0}")]
    TooFewRuns(String),
    #[error("output directory {0} is not empty (use --force to overwrite)")]
    OutputNotEmpty(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run {run}: {message}")]
    Run { run: String, message: String },
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for bad input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io { .. } | HarnessError::Run { .. } => 2,
            _ => 1,
        }
    }
}
