use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{parse_order_book, ProductOrder};
use crate::kpi::check_measure;
use crate::model::{load_model, ShopModel};
use crate::scenario::{load_scenario, Scenario, ScenarioContext};

use super::{HarnessError, DEFAULT_TICK_CAP};

/// The suite document as written.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteDocument {
    pub name: String,
    /// Control approach under test; only `reference` ships.
    pub control: String,
    pub measures: Vec<String>,
    pub assessment: Assessment,
    pub model: String,
    /// Expected model hash, checked when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_hash: Option<String>,
    pub orders: String,
    pub scenarios: Vec<ScenarioRef>,
    #[serde(default = "default_cap")]
    pub tick_cap: u64,
}

fn default_cap() -> u64 {
    DEFAULT_TICK_CAP
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assessment {
    pub seeds: Vec<u64>,
}

/// A scenario file, optionally paired with the model it was written for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Path(String),
    WithModel { path: String, model: String },
}

impl ScenarioRef {
    pub fn path(&self) -> &str {
        match self {
            ScenarioRef::Path(p) | ScenarioRef::WithModel { path: p, .. } => p,
        }
    }
}

impl SuiteDocument {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.name.trim().is_empty() {
            return Err(HarnessError::Suite("empty suite name".into()));
        }
        if self.control != "reference" {
            return Err(HarnessError::Suite(format!(
                "unknown control approach `{}`",
                self.control
            )));
        }
        if self.scenarios.is_empty() {
            return Err(HarnessError::Suite("a suite needs at least one scenario".into()));
        }
        check_seeds(&self.assessment.seeds)?;
        for m in &self.measures {
            check_measure(m).map_err(|e| HarnessError::Suite(e.to_string()))?;
        }
        if self.tick_cap == 0 {
            return Err(HarnessError::Suite("tick cap must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_seeds(seeds: &[u64]) -> Result<(), HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::Suite("no seeds".into()));
    }
    let mut seen = BTreeSet::new();
    for &s in seeds {
        if !seen.insert(s) {
            return Err(HarnessError::DuplicateSeed(s));
        }
    }
    Ok(())
}

pub fn parse_suite(document: &str) -> Result<SuiteDocument, HarnessError> {
    let suite: SuiteDocument = serde_json::from_str(document)
        .map_err(|e| HarnessError::Suite(format!("malformed suite: {e}")))?;
    suite.validate()?;
    Ok(suite)
}

#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub path: String,
    pub scenario: Scenario,
    /// sha256 of the document bytes.
    pub hash: String,
}

/// A suite with every document it references loaded and checked.
#[derive(Debug, Clone)]
pub struct LoadedSuite {
    pub document: SuiteDocument,
    pub suite_hash: String,
    pub model: ShopModel,
    pub model_hash: String,
    pub orders: Vec<ProductOrder>,
    pub orders_hash: String,
    pub scenarios: Vec<LoadedScenario>,
}

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| HarnessError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn input_error(path: &Path, message: impl ToString) -> HarnessError {
    HarnessError::Input {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Loads a suite file; relative paths inside it are resolved against the
/// suite's directory.
pub fn load_suite(path: &Path) -> Result<LoadedSuite, HarnessError> {
    let text = read(path)?;
    let document = parse_suite(&text)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolve = |p: &str| -> PathBuf { base.join(p) };

    let model_path = resolve(&document.model);
    let model = load_model(&read(&model_path)?).map_err(|e| input_error(&model_path, e))?;
    let model_hash = model.hash();
    if let Some(expected) = &document.model_hash {
        if *expected != model_hash {
            return Err(HarnessError::Suite(format!(
                "model hash mismatch: suite expects {expected}, model is {model_hash}"
            )));
        }
    }

    let orders_path = resolve(&document.orders);
    let orders_text = read(&orders_path)?;
    let orders = parse_order_book(&orders_text).map_err(|e| input_error(&orders_path, e))?;
    let context = ScenarioContext::new(&model, &orders);

    let mut scenarios: Vec<LoadedScenario> = Vec::new();
    for reference in &document.scenarios {
        if let ScenarioRef::WithModel { model: other, .. } = reference {
            let other_path = resolve(other);
            let other_model =
                load_model(&read(&other_path)?).map_err(|e| input_error(&other_path, e))?;
            if other_model.hash() != model_hash {
                return Err(HarnessError::Leanness(format!(
                    "scenario {} demands model {} ({}), but the suite runs on {}",
                    reference.path(),
                    other,
                    other_model.hash(),
                    model_hash
                )));
            }
        }
        let scenario_path = resolve(reference.path());
        let scenario_text = read(&scenario_path)?;
        let scenario =
            load_scenario(&scenario_text, &context).map_err(|e| input_error(&scenario_path, e))?;
        if scenarios.iter().any(|s| s.scenario.id == scenario.id) {
            return Err(HarnessError::Suite(format!("duplicate scenario id {}", scenario.id)));
        }
        scenarios.push(LoadedScenario {
            path: reference.path().to_string(),
            scenario,
            hash: crate::canonical::sha256_hex(&scenario_text),
        });
    }

    Ok(LoadedSuite {
        suite_hash: crate::canonical::sha256_hex(&text),
        document,
        model,
        model_hash,
        orders,
        orders_hash: crate::canonical::sha256_hex(&orders_text),
        scenarios,
    })
}
