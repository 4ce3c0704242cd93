use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::ScenarioError;

/// The four disturbance families scenarios are sorted into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    DynamicReconfiguration,
    Quality,
    OrderManagement,
    Supply,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::DynamicReconfiguration,
        Category::Quality,
        Category::OrderManagement,
        Category::Supply,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::DynamicReconfiguration => "dynamic-reconfiguration",
            Category::Quality => "quality",
            Category::OrderManagement => "order-management",
            Category::Supply => "supply",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ScenarioError::UnknownCategory(s.to_string()))
    }
}

/// The shipped label registry, byte for byte.
pub const REGISTRY_JSON: &str = include_str!("../../data/registry.json");
/// sha256 of [`REGISTRY_JSON`] as recorded when the registry was written.
pub const REGISTRY_SHA256: &str = "b205209641465d470c290d6a294539a4bf8e02d56582ed95e32160a2e939340b";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryDoc {
    categories: BTreeMap<Category, Vec<String>>,
}

/// Maps published scenario labels (`PS9`, `Query 3`, `PD1`, ...) to their
/// category.
#[derive(Debug, Clone)]
pub struct Registry {
    labels: BTreeMap<String, Category>,
}

impl Registry {
    pub fn parse(document: &str) -> Result<Self, ScenarioError> {
        let doc: RegistryDoc = serde_json::from_str(document)
            .map_err(|e| ScenarioError::Malformed(format!("registry: {e}")))?;
        let mut labels = BTreeMap::new();
        for (category, members) in doc.categories {
            for label in members {
                if let Some(previous) = labels.insert(label.clone(), category) {
                    return Err(ScenarioError::Malformed(format!(
                        "registry lists {label} under both {previous} and {category}"
                    )));
                }
            }
        }
        Ok(Registry { labels })
    }

    /// The shipped registry.
    pub fn builtin() -> &'static Registry {
        static REGISTRY: OnceLock<Registry> = OnceLock::new();
        REGISTRY.get_or_init(|| Registry::parse(REGISTRY_JSON).expect("shipped registry parses"))
    }

    /// Category of `label`; a leading `#` is ignored.
    pub fn classify(&self, label: &str) -> Result<Category, ScenarioError> {
        let key = label.trim().trim_start_matches('#');
        self.labels
            .get(key)
            .copied()
            .ok_or_else(|| ScenarioError::UnknownLabel(label.to_string()))
    }

    pub fn labels(&self) -> impl Iterator<Item = (&str, Category)> {
        self.labels.iter().map(|(l, c)| (l.as_str(), *c))
    }

    pub fn members(&self, category: Category) -> Vec<&str> {
        self.labels()
            .filter(|(_, c)| *c == category)
            .map(|(l, _)| l)
            .collect()
    }
}

/// [`Registry::classify`] on the shipped registry.
pub fn classify(label: &str) -> Result<Category, ScenarioError> {
    Registry::builtin().classify(label)
}
