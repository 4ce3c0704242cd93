//! Declarative disturbance scenarios and the manager that plays them.
//!
//! A scenario is data: rules made of a trigger and a list of actions, plus
//! named integer distributions. The manager watches the event stream, fires
//! injections into the emulation and directives into the control, and owns
//! every random draw of a run.

mod distribution;
mod manager;
mod registry;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::control::{ControlDirective, ProductOrder};
use crate::event::{EventKind, Subjects, Tick};
use crate::kernel::{Injection, RejectPolicy};
use crate::model::ShopModel;

pub use distribution::{stream_rng, Distribution, DistributionSpec};
pub use manager::{BoundAction, Firing, ScenarioManager};
pub use registry::{classify, Category, Registry, REGISTRY_JSON, REGISTRY_SHA256};

/// Deepest allowed nesting of `after` triggers.
pub const MAX_AFTER_DEPTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Malformed(String),
    #[error("unknown event kind {0}")]
    UnknownEventKind(String),
    #[error("undeclared distribution {0}")]
    UndeclaredDistribution(String),
    #[error("duplicate distribution {0}")]
    DuplicateDistribution(String),
    #[error("unresolvable target {what} {id}")]
    UnresolvableTarget { what: String, id: String },
    #[error("invalid trigger: {0}")]
    InvalidTrigger(String),
    #[error("invalid distribution {name}: {reason}")]
    InvalidDistribution { name: String, reason: String },
    #[error("unknown category {0}")]
    UnknownCategory(String),
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error("scenario {id} is filed under {registry} but declares {declared}")]
    CategoryMismatch {
        id: String,
        registry: Category,
        declared: String,
    },
}

/// When a rule fires.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Trigger {
    AtTime(Tick),
    OnEvent(EventTrigger),
    After { trigger: Box<Trigger>, delay: Tick },
}

/// The `n`-th event of `kind` whose subjects match `filter`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventTrigger {
    pub kind: String,
    #[serde(default)]
    pub filter: BTreeMap<String, String>,
    #[serde(default = "first")]
    pub occurrence: u64,
}

fn first() -> u64 {
    1
}

impl Trigger {
    fn depth(&self) -> usize {
        match self {
            Trigger::After { trigger, .. } => 1 + trigger.depth(),
            _ => 0,
        }
    }

    /// The innermost trigger and the total delay wrapped around it.
    pub fn flatten(&self) -> (&Trigger, Tick) {
        match self {
            Trigger::After { trigger, delay } => {
                let (leaf, inner) = trigger.flatten();
                (leaf, inner + delay)
            }
            leaf => (leaf, 0),
        }
    }
}

/// A duration that is either fixed or drawn from a named distribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Fixed(Tick),
    Sample { sample: String },
}

/// An injection whose duration may still need a draw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InjectionTemplate {
    MachineDown {
        target: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration: Option<Param>,
    },
    MachineUp {
        target: String,
    },
    SupplyShortage {
        target: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration: Option<Param>,
    },
    SupplyRestore {
        target: String,
    },
    ProductReject {
        target: String,
        policy: RejectPolicy,
    },
}

impl InjectionTemplate {
    pub fn duration(&self) -> Option<&Param> {
        match self {
            InjectionTemplate::MachineDown { duration, .. }
            | InjectionTemplate::SupplyShortage { duration, .. } => duration.as_ref(),
            _ => None,
        }
    }

    /// The concrete injection, with `duration` as drawn.
    pub fn bind(&self, duration: Option<Tick>) -> Injection {
        match self.clone() {
            InjectionTemplate::MachineDown { target, .. } => Injection::MachineDown { target, duration },
            InjectionTemplate::MachineUp { target } => Injection::MachineUp { target },
            InjectionTemplate::SupplyShortage { target, .. } => {
                Injection::SupplyShortage { target, duration }
            }
            InjectionTemplate::SupplyRestore { target } => Injection::SupplyRestore { target },
            InjectionTemplate::ProductReject { target, policy } => {
                Injection::ProductReject { target, policy }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Action {
    Inject(InjectionTemplate),
    Direct(ControlDirective),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub trigger: Trigger,
    #[serde(rename = "max-occurrences", default = "once")]
    pub max_occurrences: u64,
    pub actions: Vec<Action>,
}

fn once() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    /// `None` only for the rule-less baseline.
    pub category: Option<Category>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub distributions: Vec<DistributionSpec>,
    #[serde(default)]
    pub rules: Vec<Rule>,
}

impl Scenario {
    /// The undisturbed baseline.
    pub fn null() -> Self {
        Scenario {
            id: "null".into(),
            category: None,
            description: String::new(),
            distributions: Vec::new(),
            rules: Vec::new(),
        }
    }

    pub fn is_null(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn distribution(&self, name: &str) -> Option<&DistributionSpec> {
        self.distributions.iter().find(|d| d.name == name)
    }

    pub fn hash(&self) -> String {
        crate::canonical::sha256_hex(crate::canonical::to_canonical_string(self))
    }
}

/// What scenario targets are checked against. Without a model only the
/// document itself is validated.
#[derive(Debug, Clone, Default)]
pub struct ScenarioContext {
    machines: Option<BTreeSet<String>>,
    shuttles: BTreeSet<String>,
    nodes: BTreeSet<String>,
    orders: BTreeSet<String>,
}

impl ScenarioContext {
    pub fn new(model: &ShopModel, orders: &[ProductOrder]) -> Self {
        ScenarioContext {
            machines: Some(model.machines.iter().map(|m| m.id.clone()).collect()),
            shuttles: model.shuttle_ids().into_iter().collect(),
            nodes: model.transport.nodes.iter().cloned().collect(),
            orders: orders.iter().map(|o| o.id.clone()).collect(),
        }
    }

    /// Checks documents on their own, without resolving targets.
    pub fn unconstrained() -> Self {
        ScenarioContext::default()
    }

    fn resolve(&self, what: &str, id: &str, extra_orders: &BTreeSet<String>) -> Result<(), ScenarioError> {
        if self.machines.is_none() {
            return Ok(());
        }
        let known = match what {
            "machine" => self.machines.as_ref().is_some_and(|m| m.contains(id)),
            "shuttle" => self.shuttles.contains(id),
            "node" => self.nodes.contains(id),
            "order" => self.orders.contains(id) || extra_orders.contains(id),
            _ => false,
        };
        if known {
            Ok(())
        } else {
            Err(ScenarioError::UnresolvableTarget {
                what: what.into(),
                id: id.into(),
            })
        }
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(document: &str, context: &ScenarioContext) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario =
        serde_json::from_str(document).map_err(|e| ScenarioError::Malformed(e.to_string()))?;
    validate(&scenario, context)?;
    Ok(scenario)
}

fn validate(s: &Scenario, context: &ScenarioContext) -> Result<(), ScenarioError> {
    if s.id.trim().is_empty() {
        return Err(ScenarioError::Malformed("empty scenario id".into()));
    }
    match (s.category, s.rules.is_empty()) {
        (None, false) => {
            return Err(ScenarioError::Malformed(format!(
                "scenario {} has rules but no category",
                s.id
            )))
        }
        (Some(declared), _) => {
            if let Ok(registry) = Registry::builtin().classify(&s.id) {
                if registry != declared {
                    return Err(ScenarioError::CategoryMismatch {
                        id: s.id.clone(),
                        registry,
                        declared: declared.to_string(),
                    });
                }
            }
        }
        (None, true) => {}
    }

    let mut names = BTreeSet::new();
    for d in &s.distributions {
        if !names.insert(d.name.as_str()) {
            return Err(ScenarioError::DuplicateDistribution(d.name.clone()));
        }
        d.distribution
            .check()
            .map_err(|reason| ScenarioError::InvalidDistribution {
                name: d.name.clone(),
                reason,
            })?;
    }

    // Orders inserted by the scenario itself are valid targets too.
    let inserted: BTreeSet<String> = s
        .rules
        .iter()
        .flat_map(|r| &r.actions)
        .filter_map(|a| match a {
            Action::Direct(ControlDirective::InsertOrder { order }) => Some(order.id.clone()),
            _ => None,
        })
        .collect();

    for (index, rule) in s.rules.iter().enumerate() {
        if rule.trigger.depth() > MAX_AFTER_DEPTH {
            return Err(ScenarioError::InvalidTrigger(format!(
                "rule {index}: `after` nested deeper than {MAX_AFTER_DEPTH}"
            )));
        }
        if rule.max_occurrences == 0 {
            return Err(ScenarioError::InvalidTrigger(format!(
                "rule {index}: max-occurrences must be at least 1"
            )));
        }
        if rule.actions.is_empty() {
            return Err(ScenarioError::Malformed(format!("rule {index} has no actions")));
        }
        if let (Trigger::OnEvent(t), _) = rule.trigger.flatten() {
            t.kind
                .parse::<EventKind>()
                .map_err(|_| ScenarioError::UnknownEventKind(t.kind.clone()))?;
            if t.occurrence == 0 {
                return Err(ScenarioError::InvalidTrigger(format!(
                    "rule {index}: occurrence index must be at least 1"
                )));
            }
            for (field, id) in &t.filter {
                if !Subjects::FIELDS.contains(&field.as_str()) {
                    return Err(ScenarioError::InvalidTrigger(format!(
                        "rule {index}: unknown filter field `{field}`"
                    )));
                }
                context.resolve(field, id, &inserted)?;
            }
        }
        for action in &rule.actions {
            validate_action(action, s, context, &inserted)?;
        }
    }
    Ok(())
}

fn validate_action(
    action: &Action,
    s: &Scenario,
    context: &ScenarioContext,
    inserted: &BTreeSet<String>,
) -> Result<(), ScenarioError> {
    match action {
        Action::Inject(template) => {
            if let Some(Param::Sample { sample }) = template.duration() {
                if s.distribution(sample).is_none() {
                    return Err(ScenarioError::UndeclaredDistribution(sample.clone()));
                }
            }
            let injection = template.bind(None);
            let what = if injection.targets_order() { "order" } else { "machine" };
            context.resolve(what, injection.target(), inserted)
        }
        Action::Direct(directive) => match directive {
            ControlDirective::InsertOrder { order } => order
                .check()
                .map_err(ScenarioError::Malformed),
            ControlDirective::CancelOrder { order } | ControlDirective::SetPriority { order, .. } => {
                context.resolve("order", order, inserted)
            }
            ControlDirective::AnnounceBreakdown { machine }
            | ControlDirective::AnnounceSupplyBlock { machine } => {
                context.resolve("machine", machine, inserted)
            }
        },
    }
}
