//! Production events: the shared vocabulary of every flow in the harness.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Simulation time in integer ticks.
pub type Tick = u64;

/// What happened on the shop floor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    OrderReleased,
    ShuttleDeparted,
    ShuttleArrived,
    OpStarted,
    OpFinished,
    MachineDown,
    MachineUp,
    ProductRejected,
    SupplyBlocked,
    SupplyRestored,
    OrderCompleted,
    OrderCancelled,
    /// A control command the emulation refused (e.g. start-op on a down machine).
    CommandRejected,
}

impl EventKind {
    pub const ALL: [EventKind; 13] = [
        EventKind::OrderReleased,
        EventKind::ShuttleDeparted,
        EventKind::ShuttleArrived,
        EventKind::OpStarted,
        EventKind::OpFinished,
        EventKind::MachineDown,
        EventKind::MachineUp,
        EventKind::ProductRejected,
        EventKind::SupplyBlocked,
        EventKind::SupplyRestored,
        EventKind::OrderCompleted,
        EventKind::OrderCancelled,
        EventKind::CommandRejected,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::OrderReleased => "order-released",
            EventKind::ShuttleDeparted => "shuttle-departed",
            EventKind::ShuttleArrived => "shuttle-arrived",
            EventKind::OpStarted => "op-started",
            EventKind::OpFinished => "op-finished",
            EventKind::MachineDown => "machine-down",
            EventKind::MachineUp => "machine-up",
            EventKind::ProductRejected => "product-rejected",
            EventKind::SupplyBlocked => "supply-blocked",
            EventKind::SupplyRestored => "supply-restored",
            EventKind::OrderCompleted => "order-completed",
            EventKind::OrderCancelled => "order-cancelled",
            EventKind::CommandRejected => "command-rejected",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown event kind `{0}`")]
pub struct UnknownEventKind(pub String);

impl FromStr for EventKind {
    type Err = UnknownEventKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownEventKind(s.to_string()))
    }
}

/// Entity ids an event refers to. `node` is the transport node where a
/// shuttle event happens; `machine` is set as well when that node is a machine.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Subjects {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub machine: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuttle: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
}

impl Subjects {
    pub fn machine(mut self, id: impl Into<String>) -> Self {
        self.machine = Some(id.into());
        self
    }

    pub fn shuttle(mut self, id: impl Into<String>) -> Self {
        self.shuttle = Some(id.into());
        self
    }

    pub fn order(mut self, id: impl Into<String>) -> Self {
        self.order = Some(id.into());
        self
    }

    pub fn order_opt(mut self, id: Option<String>) -> Self {
        self.order = id;
        self
    }

    pub fn node(mut self, id: impl Into<String>) -> Self {
        self.node = Some(id.into());
        self
    }

    /// Value of a named subject field (`machine`, `shuttle`, `order`, `node`).
    pub fn get(&self, field: &str) -> Option<&str> {
        match field {
            "machine" => self.machine.as_deref(),
            "shuttle" => self.shuttle.as_deref(),
            "order" => self.order.as_deref(),
            "node" => self.node.as_deref(),
            _ => None,
        }
    }

    pub const FIELDS: [&'static str; 4] = ["machine", "shuttle", "order", "node"];

    /// Stable tie-break key for events at the same tick.
    pub fn sort_key(&self) -> String {
        let part = |o: &Option<String>| o.clone().unwrap_or_default();
        format!(
            "{}|{}|{}|{}",
            part(&self.machine),
            part(&self.shuttle),
            part(&self.order),
            part(&self.node)
        )
    }
}

/// A timestamped production event. `(time, seq)` is strictly increasing over
/// the stream emitted by one kernel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: Tick,
    pub seq: u64,
    pub kind: EventKind,
    #[serde(flatten)]
    pub subjects: Subjects,
    /// Free-text qualifier: rejection policy, refusal reason.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl SimEvent {
    pub fn machine(&self) -> Option<&str> {
        self.subjects.machine.as_deref()
    }

    pub fn order(&self) -> Option<&str> {
        self.subjects.order.as_deref()
    }

    pub fn shuttle(&self) -> Option<&str> {
        self.subjects.shuttle.as_deref()
    }

    pub fn node(&self) -> Option<&str> {
        self.subjects.node.as_deref()
    }
}

impl fmt::Display for SimEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} #{} {}", self.time, self.seq, self.kind)?;
        for field in Subjects::FIELDS {
            if let Some(v) = self.subjects.get(field) {
                write!(f, " {field}={v}")?;
            }
        }
        if let Some(d) = &self.detail {
            write!(f, " ({d})")?;
        }
        Ok(())
    }
}
