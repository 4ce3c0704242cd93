use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::kpi::{KpiReport, Measure};

use super::artifacts::Manifest;
use super::{HarnessError, RunStatus};

/// Scenario id of the undisturbed baseline.
pub const BASELINE: &str = "null";

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub scenario: String,
    /// A seed, or `mean` / `min` / `max` for the per-scenario rows.
    pub seed: String,
    pub values: Vec<Option<Measure>>,
    pub deltas: Vec<Option<Measure>>,
}

/// Per-run KPI values and their deltas against the baseline run with the
/// same seed, followed by mean/min/max of the deltas per scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub measures: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

fn delta(a: Option<Measure>, b: Option<Measure>) -> Option<Measure> {
    Some(match (a?, b?) {
        (Measure::Int(x), Measure::Int(y)) => Measure::Int(x - y),
        (x, y) => Measure::Real(x.as_f64() - y.as_f64()),
    })
}

/// Compares runs against the baseline. Only valid reports take part.
pub fn compare(reports: &[KpiReport], measures: &[String]) -> Result<ComparisonTable, HarnessError> {
    let ok: Vec<&KpiReport> = reports.iter().filter(|r| r.valid).collect();
    let baselines: BTreeMap<u64, &KpiReport> = ok
        .iter()
        .filter(|r| r.scenario == BASELINE)
        .map(|r| (r.seed, *r))
        .collect();
    if baselines.is_empty() {
        return Err(HarnessError::NoBaseline);
    }
    if ok.len() < 2 {
        return Err(HarnessError::TooFewRuns(format!(
            "{} valid run(s); at least two are needed",
            ok.len()
        )));
    }

    let mut rows = Vec::new();
    let mut per_scenario: BTreeMap<&str, Vec<Vec<Option<Measure>>>> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for report in &ok {
        let values: Vec<Option<Measure>> = measures.iter().map(|m| report.get(m)).collect();
        let deltas: Vec<Option<Measure>> = match baselines.get(&report.seed) {
            Some(base) => measures
                .iter()
                .zip(&values)
                .map(|(m, v)| delta(*v, base.get(m)))
                .collect(),
            None => vec![None; measures.len()],
        };
        if !order.contains(&report.scenario.as_str()) {
            order.push(&report.scenario);
        }
        per_scenario
            .entry(&report.scenario)
            .or_default()
            .push(deltas.clone());
        rows.push(ComparisonRow {
            scenario: report.scenario.clone(),
            seed: report.seed.to_string(),
            values,
            deltas,
        });
    }

    for scenario in order {
        let runs = &per_scenario[scenario];
        for stat in ["mean", "min", "max"] {
            let deltas = (0..measures.len())
                .map(|i| {
                    let xs: Vec<f64> = runs.iter().filter_map(|d| d[i]).map(Measure::as_f64).collect();
                    if xs.is_empty() {
                        return None;
                    }
                    Some(Measure::Real(match stat {
                        "mean" => xs.iter().sum::<f64>() / xs.len() as f64,
                        "min" => xs.iter().copied().fold(f64::INFINITY, f64::min),
                        _ => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    }))
                })
                .collect();
            rows.push(ComparisonRow {
                scenario: scenario.to_string(),
                seed: stat.to_string(),
                values: vec![None; measures.len()],
                deltas,
            });
        }
    }
    Ok(ComparisonTable {
        measures: measures.to_vec(),
        rows,
    })
}

fn cell(m: Option<Measure>) -> String {
    m.map(|m| m.to_string()).unwrap_or_default()
}

impl ComparisonTable {
    pub fn row(&self, scenario: &str, seed: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.seed == seed)
    }

    pub fn delta(&self, scenario: &str, seed: &str, measure: &str) -> Option<Measure> {
        let index = self.measures.iter().position(|m| m == measure)?;
        self.row(scenario, seed)?.deltas[index]
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["scenario".to_string(), "seed".to_string()];
        for m in &self.measures {
            header.push(m.clone());
            header.push(format!("delta_{m}"));
        }
        writer.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut record = vec![row.scenario.clone(), row.seed.clone()];
            for (v, d) in row.values.iter().zip(&row.deltas) {
                record.push(cell(*v));
                record.push(cell(*d));
            }
            writer.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    /// Mean deltas per scenario as an aligned text table.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let width = self.measures.iter().map(String::len).max().unwrap_or(0).max(8);
        let scenarios: Vec<&str> = self
            .rows
            .iter()
            .filter(|r| r.seed == "mean")
            .map(|r| r.scenario.as_str())
            .collect();
        let _ = write!(out, "{:<width$}", "mean delta");
        for s in &scenarios {
            let _ = write!(out, " {s:>16}");
        }
        out.push('\n');
        for (i, m) in self.measures.iter().enumerate() {
            let _ = write!(out, "{m:<width$}");
            for s in &scenarios {
                let d = self.row(s, "mean").and_then(|r| r.deltas[i]);
                let text = d.map_or("-".to_string(), |d| format!("{:+.3}", d.as_f64()));
                let _ = write!(out, " {text:>16}");
            }
            out.push('\n');
        }
        out
    }
}

/// Rebuilds the comparison of a finished suite from its output directory.
pub fn compare_dir(dir: &Path) -> Result<ComparisonTable, HarnessError> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| HarnessError::Input {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| HarnessError::Input {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;
    let mut reports = Vec::new();
    for run in manifest.runs.iter().filter(|r| r.status == RunStatus::Ok) {
        let path = dir.join(&run.report);
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::Input {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let report: KpiReport = serde_json::from_str(&text).map_err(|e| HarnessError::Input {
            path: path.clone(),
            message: e.to_string(),
        })?;
        reports.push(report);
    }
    compare(&reports, &manifest.measures)
}
