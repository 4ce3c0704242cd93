use serde::{Deserialize, Serialize};

use crate::event::Tick;

/// A command from the control system to the shop floor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControlCommand {
    /// Send `shuttle` to node `to`, boarding `load` first when given. The
    /// order must be waiting at the shuttle's current node.
    MoveShuttle {
        shuttle: String,
        to: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        load: Option<String>,
        holon: String,
    },
    /// Process `order` (on a shuttle parked at `machine`) with `operation`.
    StartOp {
        machine: String,
        order: String,
        operation: String,
        holon: String,
    },
    /// Take a stationary, idle order off the floor.
    CancelOrder { order: String, holon: String },
    EndOfRound { holon: String },
}

impl ControlCommand {
    pub fn end_of_round() -> Self {
        ControlCommand::EndOfRound {
            holon: "control".to_string(),
        }
    }

    pub fn is_end_of_round(&self) -> bool {
        matches!(self, ControlCommand::EndOfRound { .. })
    }

    pub fn kind_str(&self) -> &'static str {
        match self {
            ControlCommand::MoveShuttle { .. } => "move-shuttle",
            ControlCommand::StartOp { .. } => "start-op",
            ControlCommand::CancelOrder { .. } => "cancel-order",
            ControlCommand::EndOfRound { .. } => "end-of-round",
        }
    }

    pub fn holon(&self) -> &str {
        match self {
            ControlCommand::MoveShuttle { holon, .. }
            | ControlCommand::StartOp { holon, .. }
            | ControlCommand::CancelOrder { holon, .. }
            | ControlCommand::EndOfRound { holon } => holon,
        }
    }
}

/// A product order as held by the production database / order book.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductOrder {
    pub id: String,
    pub routing: Vec<String>,
    pub release: Tick,
    pub due: Tick,
    #[serde(default)]
    pub priority: i64,
    #[serde(default, skip_serializing_if = "OrderStatus::is_pending")]
    pub status: OrderStatus,
}

impl ProductOrder {
    pub fn new(id: &str, routing: &[&str], release: Tick, due: Tick, priority: i64) -> Self {
        ProductOrder {
            id: id.to_string(),
            routing: routing.iter().map(|s| s.to_string()).collect(),
            release,
            due,
            priority,
            status: OrderStatus::Pending,
        }
    }

    /// Checks the order's own invariants (not the model).
    pub fn check(&self) -> Result<(), String> {
        if self.routing.is_empty() {
            return Err(format!("order {} has an empty routing", self.id));
        }
        if self.due < self.release {
            return Err(format!(
                "order {} is due ({}) before its release ({})",
                self.id, self.due, self.release
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderStatus {
    #[default]
    Pending,
    Active,
    Completed,
    Cancelled,
    Scrapped,
}

impl OrderStatus {
    fn is_pending(&self) -> bool {
        *self == OrderStatus::Pending
    }

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            OrderStatus::Completed | OrderStatus::Cancelled | OrderStatus::Scrapped
        )
    }

    /// pending -> active -> {completed | cancelled | scrapped}. A pending
    /// order may also be cancelled before it is ever released.
    pub fn can_become(self, next: OrderStatus) -> bool {
        use OrderStatus::*;
        matches!(
            (self, next),
            (Pending, Active) | (Pending, Cancelled) | (Active, Completed) | (Active, Cancelled) | (Active, Scrapped)
        )
    }
}

/// Reads an order book file: a JSON list of orders.
pub fn parse_order_book(document: &str) -> Result<Vec<ProductOrder>, String> {
    let orders: Vec<ProductOrder> =
        serde_json::from_str(document).map_err(|e| format!("malformed order book: {e}"))?;
    for o in &orders {
        o.check()?;
    }
    Ok(orders)
}

/// A scenario-manager directive to the control system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControlDirective {
    InsertOrder { order: ProductOrder },
    CancelOrder { order: String },
    SetPriority { order: String, priority: i64 },
    AnnounceBreakdown { machine: String },
    AnnounceSupplyBlock { machine: String },
}

impl ControlDirective {
    pub fn kind_str(&self) -> &'static str {
        match self {
            ControlDirective::InsertOrder { .. } => "insert-order",
            ControlDirective::CancelOrder { .. } => "cancel-order",
            ControlDirective::SetPriority { .. } => "set-priority",
            ControlDirective::AnnounceBreakdown { .. } => "announce-breakdown",
            ControlDirective::AnnounceSupplyBlock { .. } => "announce-supply-block",
        }
    }
}

/// Reply to a directive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acknowledgement {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Acknowledgement {
    pub fn ok() -> Self {
        Acknowledgement { ok: true, error: None }
    }

    pub fn rejected(reason: impl Into<String>) -> Self {
        Acknowledgement {
            ok: false,
            error: Some(reason.into()),
        }
    }
}
