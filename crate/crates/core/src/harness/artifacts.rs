use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canonical::{sha256_hex, to_canonical_pretty};
use crate::il::WIRE_PREFIX;
use crate::kpi::KpiReport;
use crate::scenario::{Category, REGISTRY_SHA256};

use super::compare::{compare, ComparisonTable};
use super::run::{run_scenario, RunOptions, RunOutcome, RunRecord, RunStatus};
use super::suite::{check_seeds, LoadedSuite};
use super::HarnessError;

/// Environment stamp: everything a result depends on besides the code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub harness: String,
    pub protocol: String,
    pub suite_hash: String,
    pub model_hash: String,
    pub orders_hash: String,
    pub registry_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestScenario {
    pub id: String,
    pub category: Option<Category>,
    pub path: String,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub scenario: String,
    pub seed: u64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub session_log: String,
    pub report: String,
    pub log_sha256: String,
    pub report_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub suite: String,
    pub control: String,
    pub measures: Vec<String>,
    pub seeds: Vec<u64>,
    pub tick_cap: u64,
    pub environment: Environment,
    pub scenarios: Vec<ManifestScenario>,
    pub runs: Vec<ManifestRun>,
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub runs: Vec<RunOutcome>,
    pub table: Result<ComparisonTable, String>,
    pub manifest: Manifest,
}

impl SuiteOutcome {
    pub fn records(&self) -> Vec<&RunRecord> {
        self.runs.iter().map(|r| &r.record).collect()
    }

    pub fn reports(&self) -> Vec<&KpiReport> {
        self.runs.iter().map(|r| &r.report).collect()
    }

    pub fn all_ok(&self) -> bool {
        self.runs.iter().all(|r| r.record.status == RunStatus::Ok)
    }
}

const OWN_FILES: [&str; 3] = ["manifest.json", "comparison.csv", "summary.txt"];

/// Removes what a previous run wrote into `dir`, and nothing else.
pub fn clear_artifacts(dir: &Path) -> Result<(), HarnessError> {
    for name in OWN_FILES {
        let path = dir.join(name);
        if path.exists() {
            fs::remove_file(&path).map_err(|e| HarnessError::io(&path, e))?;
        }
    }
    let runs = dir.join("runs");
    if runs.exists() {
        fs::remove_dir_all(&runs).map_err(|e| HarnessError::io(&runs, e))?;
    }
    Ok(())
}

fn prepare_output(dir: &Path, force: bool) -> Result<(), HarnessError> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
        if entries.next().is_some() {
            if !force {
                return Err(HarnessError::OutputNotEmpty(dir.to_path_buf()));
            }
            clear_artifacts(dir)?;
        }
    }
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Runs every (scenario, seed) pair of the suite, compares against the
/// baseline and writes the artifacts into `out`.
pub fn run_suite(
    suite: &LoadedSuite,
    seeds: Option<&[u64]>,
    options: &RunOptions,
    out: &Path,
    force: bool,
) -> Result<SuiteOutcome, HarnessError> {
    let seeds: Vec<u64> = seeds.map_or_else(|| suite.document.assessment.seeds.clone(), <[u64]>::to_vec);
    check_seeds(&seeds)?;
    prepare_output(out, force)?;

    let jobs: Vec<(usize, u64)> = (0..suite.scenarios.len())
        .flat_map(|s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let runs: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(s, seed)| {
            run_scenario(
                &suite.document.name,
                &suite.model,
                &suite.orders,
                Some(&suite.scenarios[s].scenario),
                seed,
                options,
            )
        })
        .collect::<Result<_, _>>()?;
    for run in &runs {
        eprintln!(
            "{}-s{}: {:?} ({} ms)",
            run.record.scenario,
            run.record.seed,
            run.record.status,
            run.record.wall.as_millis()
        );
    }

    let reports: Vec<KpiReport> = runs.iter().map(|r| r.report.clone()).collect();
    let table = compare(&reports, &suite.document.measures).map_err(|e| e.to_string());
    let manifest = manifest(suite, &seeds, options, &runs);
    let outcome = SuiteOutcome {
        runs,
        table,
        manifest,
    };
    write_artifacts(&outcome, out)?;
    Ok(outcome)
}

fn manifest(suite: &LoadedSuite, seeds: &[u64], options: &RunOptions, runs: &[RunOutcome]) -> Manifest {
    Manifest {
        suite: suite.document.name.clone(),
        control: suite.document.control.clone(),
        measures: suite.document.measures.clone(),
        seeds: seeds.to_vec(),
        tick_cap: options.tick_cap,
        environment: Environment {
            harness: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            protocol: WIRE_PREFIX.trim_end().to_string(),
            suite_hash: suite.suite_hash.clone(),
            model_hash: suite.model_hash.clone(),
            orders_hash: suite.orders_hash.clone(),
            registry_hash: REGISTRY_SHA256.to_string(),
        },
        scenarios: suite
            .scenarios
            .iter()
            .map(|s| ManifestScenario {
                id: s.scenario.id.clone(),
                category: s.scenario.category,
                path: s.path.clone(),
                hash: s.hash.clone(),
            })
            .collect(),
        runs: runs
            .iter()
            .map(|r| ManifestRun {
                scenario: r.record.scenario.clone(),
                seed: r.record.seed,
                status: r.record.status,
                reason: r.record.reason.clone(),
                session_log: r.record.session_log.clone(),
                report: r.record.report.clone(),
                log_sha256: r.log.hash(),
                report_sha256: sha256_hex(r.report.to_json()),
            })
            .collect(),
    }
}

fn write(path: PathBuf, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    fs::write(&path, contents).map_err(|e| HarnessError::io(&path, e))
}

/// Writes manifest, per-run logs and reports, comparison CSV and summary.
pub fn write_artifacts(outcome: &SuiteOutcome, out: &Path) -> Result<(), HarnessError> {
    for run in &outcome.runs {
        write(out.join(&run.record.session_log), &run.log.text())?;
        write(out.join(&run.record.report), &run.report.to_json())?;
    }
    if let Ok(table) = &outcome.table {
        write(out.join("comparison.csv"), &table.to_csv())?;
    }
    write(out.join("summary.txt"), &summary(outcome))?;
    write(out.join("manifest.json"), &to_canonical_pretty(&outcome.manifest))
}

fn summary(outcome: &SuiteOutcome) -> String {
    let m = &outcome.manifest;
    let mut text = format!(
        "suite {}\ncontrol {}\nmodel {}\nseeds {:?}\n\nruns\n",
        m.suite, m.control, m.environment.model_hash, m.seeds
    );
    for run in &m.runs {
        let reason = run.reason.as_deref().map(|r| format!(" ({r})")).unwrap_or_default();
        text.push_str(&format!(
            "  {:<20} seed {:<6} {:?}{reason}\n",
            run.scenario, run.seed, run.status
        ));
    }
    text.push('\n');
    match &outcome.table {
        Ok(table) => text.push_str(&table.summary()),
        Err(e) => text.push_str(&format!("no comparison: {e}\n")),
    }
    text
}
