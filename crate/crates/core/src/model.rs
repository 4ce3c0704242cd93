//! The lean shop model: machines, transport graph, shuttles and stations.
//!
//! A model is static and scenario-free. Orders never appear here; they reach
//! the emulation through the interface layer at run time.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::cmp::Reverse;
use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::canonical::{sha256_hex, to_canonical_string};
use crate::event::Tick;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("malformed model document: {0}")]
    Malformed(String),
    #[error("invalid model field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

impl ModelError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ModelError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineSpec {
    pub id: String,
    /// Operation kind -> processing duration in ticks.
    pub operations: BTreeMap<String, Tick>,
}

impl MachineSpec {
    pub fn duration_of(&self, operation: &str) -> Option<Tick> {
        self.operations.get(operation).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub travel: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransportGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fleet {
    pub count: u32,
    pub home: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stations {
    pub input: String,
    pub output: String,
}

/// Validated static description of the emulated shop floor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShopModel {
    pub machines: Vec<MachineSpec>,
    pub transport: TransportGraph,
    pub shuttles: Fleet,
    pub stations: Stations,
}

// Raw document shapes. Durations are signed so that negative values get a
// field-named "non-positive duration" error instead of a serde type error.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    machines: Vec<RawMachine>,
    transport: RawTransport,
    shuttles: RawFleet,
    stations: Stations,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMachine {
    id: String,
    #[serde(deserialize_with = "unique_operations")]
    operations: Vec<(String, i64)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransport {
    nodes: Vec<String>,
    edges: Vec<RawEdge>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    from: String,
    to: String,
    travel: i64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFleet {
    count: i64,
    home: String,
}

/// Reads an operations object, refusing repeated keys (serde_json would
/// otherwise keep the last one silently).
fn unique_operations<'de, D>(deserializer: D) -> Result<Vec<(String, i64)>, D::Error>
where
    D: Deserializer<'de>,
{
    struct OpsVisitor;

    impl<'de> Visitor<'de> for OpsVisitor {
        type Value = Vec<(String, i64)>;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("an object mapping operation kinds to durations")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
            let mut out: Vec<(String, i64)> = Vec::new();
            while let Some((key, value)) = map.next_entry::<String, i64>()? {
                if out.iter().any(|(k, _)| *k == key) {
                    return Err(serde::de::Error::custom(format!(
                        "operation `{key}` has more than one duration"
                    )));
                }
                out.push((key, value));
            }
            Ok(out)
        }
    }

    deserializer.deserialize_map(OpsVisitor)
}

fn positive(field: String, value: i64) -> Result<Tick, ModelError> {
    if value <= 0 {
        Err(ModelError::invalid(
            field,
            format!("non-positive duration {value}"),
        ))
    } else {
        Ok(value as Tick)
    }
}

/// Parses and validates a model document.
pub fn load_model(document: &str) -> Result<ShopModel, ModelError> {
    let raw: RawModel =
        serde_json::from_str(document).map_err(|e| ModelError::Malformed(e.to_string()))?;

    let mut node_set = BTreeSet::new();
    for (i, node) in raw.transport.nodes.iter().enumerate() {
        if !node_set.insert(node.clone()) {
            return Err(ModelError::invalid(
                format!("transport.nodes[{i}]"),
                format!("duplicate id {node}"),
            ));
        }
    }

    let mut machines = Vec::with_capacity(raw.machines.len());
    let mut machine_ids = BTreeSet::new();
    for (i, m) in raw.machines.into_iter().enumerate() {
        if !machine_ids.insert(m.id.clone()) {
            return Err(ModelError::invalid(
                format!("machines[{i}].id"),
                format!("duplicate id {}", m.id),
            ));
        }
        if !node_set.contains(&m.id) {
            return Err(ModelError::invalid(
                format!("machines[{i}].id"),
                format!("machine {} is not a transport node", m.id),
            ));
        }
        if m.operations.is_empty() {
            return Err(ModelError::invalid(
                format!("machines[{i}].operations"),
                format!("machine {} has no capability", m.id),
            ));
        }
        let mut operations = BTreeMap::new();
        for (kind, d) in m.operations {
            let d = positive(format!("machines[{i}].operations.{kind}"), d)?;
            operations.insert(kind, d);
        }
        machines.push(MachineSpec { id: m.id, operations });
    }

    let mut edges = Vec::with_capacity(raw.transport.edges.len());
    for (i, e) in raw.transport.edges.into_iter().enumerate() {
        for (end, id) in [("from", &e.from), ("to", &e.to)] {
            if !node_set.contains(id) {
                return Err(ModelError::invalid(
                    format!("transport.edges[{i}].{end}"),
                    format!("unknown node {id}"),
                ));
            }
        }
        let travel = positive(format!("transport.edges[{i}].travel"), e.travel)?;
        edges.push(Edge {
            from: e.from,
            to: e.to,
            travel,
        });
    }

    if raw.shuttles.count < 1 {
        return Err(ModelError::invalid(
            "shuttles.count",
            format!("shuttle count must be at least 1, got {}", raw.shuttles.count),
        ));
    }
    if !node_set.contains(&raw.shuttles.home) {
        return Err(ModelError::invalid(
            "shuttles.home",
            format!("unknown node {}", raw.shuttles.home),
        ));
    }
    for (field, id) in [
        ("stations.input", &raw.stations.input),
        ("stations.output", &raw.stations.output),
    ] {
        if !node_set.contains(id) {
            return Err(ModelError::invalid(field, format!("unknown node {id}")));
        }
    }

    let model = ShopModel {
        machines,
        transport: TransportGraph {
            nodes: raw.transport.nodes,
            edges,
        },
        shuttles: Fleet {
            count: raw.shuttles.count as u32,
            home: raw.shuttles.home,
        },
        stations: raw.stations,
    };

    let routes = Routes::compute(&model);
    let mut key_nodes: Vec<&str> = model.machines.iter().map(|m| m.id.as_str()).collect();
    key_nodes.push(&model.stations.input);
    key_nodes.push(&model.stations.output);
    for from in &key_nodes {
        for to in &key_nodes {
            if routes.distance(from, to).is_none() {
                return Err(ModelError::invalid(
                    "transport",
                    format!("graph is disconnected: no path from {from} to {to}"),
                ));
            }
        }
    }
    Ok(model)
}

impl ShopModel {
    pub fn machine(&self, id: &str) -> Option<&MachineSpec> {
        self.machines.iter().find(|m| m.id == id)
    }

    pub fn is_machine(&self, id: &str) -> bool {
        self.machine(id).is_some()
    }

    pub fn has_node(&self, id: &str) -> bool {
        self.transport.nodes.iter().any(|n| n == id)
    }

    /// Shuttle ids `S1..=Sn`.
    pub fn shuttle_ids(&self) -> Vec<String> {
        (1..=self.shuttles.count).map(|i| format!("S{i}")).collect()
    }

    pub fn has_shuttle(&self, id: &str) -> bool {
        id.strip_prefix('S')
            .and_then(|n| n.parse::<u32>().ok())
            .is_some_and(|n| n >= 1 && n <= self.shuttles.count && id == format!("S{n}"))
    }

    /// True when some machine can perform `operation`.
    pub fn supports(&self, operation: &str) -> bool {
        self.machines.iter().any(|m| m.operations.contains_key(operation))
    }

    /// Content hash of the canonical form; whitespace in the source document
    /// does not matter.
    pub fn hash(&self) -> String {
        sha256_hex(to_canonical_string(self))
    }

    pub fn to_document(&self) -> String {
        crate::canonical::to_canonical_pretty(self)
    }
}

/// All-pairs shortest travel times over the transport graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Routes {
    dist: BTreeMap<String, BTreeMap<String, Tick>>,
}

impl Routes {
    pub fn compute(model: &ShopModel) -> Self {
        let mut adjacency: BTreeMap<&str, Vec<(&str, Tick)>> = BTreeMap::new();
        for e in &model.transport.edges {
            adjacency
                .entry(e.from.as_str())
                .or_default()
                .push((e.to.as_str(), e.travel));
        }
        let mut dist = BTreeMap::new();
        for source in &model.transport.nodes {
            let mut best: BTreeMap<String, Tick> = BTreeMap::new();
            let mut heap = BinaryHeap::new();
            heap.push(Reverse((0, source.as_str())));
            while let Some(Reverse((d, node))) = heap.pop() {
                if best.contains_key(node) {
                    continue;
                }
                best.insert(node.to_string(), d);
                for (next, w) in adjacency.get(node).into_iter().flatten() {
                    if !best.contains_key(*next) {
                        heap.push(Reverse((d + w, *next)));
                    }
                }
            }
            dist.insert(source.clone(), best);
        }
        Routes { dist }
    }

    pub fn distance(&self, from: &str, to: &str) -> Option<Tick> {
        self.dist.get(from)?.get(to).copied()
    }
}
