//! A small deterministic holonic control: one order holon per product order,
//! one resource holon per machine, direct calls between them.
//!
//! It is the benchmark *subject*, kept deliberately simple so that every
//! harness property has an oracle. Each round it
//!
//! 1. updates its beliefs from the notification batch,
//! 2. asks every idle, available machine (id order) for the best order parked
//!    at it whose next step it can perform,
//! 3. routes loaded, stationary shuttles to the nearest available machine for
//!    the next step (or to the output once the routing is done),
//! 4. pairs empty shuttles with waiting orders, nearest first,
//!
//! and always closes with an end-of-round command. "Best" means highest
//! priority, then earliest due date, then lowest id.

mod command;
mod endpoint;
mod policy;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use command::*;
pub use endpoint::ControlEndpoint;

use crate::event::{EventKind, SimEvent};
use crate::model::{Routes, ShopModel};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ControlError {
    #[error("duplicate order id {0}")]
    DuplicateOrder(String),
    #[error("order {order}: no machine can perform operation {operation}")]
    NoCapableMachine { order: String, operation: String },
    #[error("invalid order: {0}")]
    InvalidOrder(String),
}

/// Where decision latency comes from. `Off` records zero, which keeps every
/// output byte-reproducible; `Wall` measures real elapsed time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatencyMode {
    #[default]
    Off,
    Wall,
}

/// A named control-side measurement (FLOW2 / FLOW7 payload).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPoint {
    pub name: String,
    pub value: i64,
}

impl DataPoint {
    pub fn new(name: &str, value: i64) -> Self {
        DataPoint {
            name: name.to_string(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Place {
    Waiting(String),
    Aboard(String),
}

#[derive(Debug, Clone)]
pub(crate) struct OrderHolon {
    pub order: ProductOrder,
    pub next_step: usize,
    pub place: Option<Place>,
    pub in_op: Option<String>,
    pub cancel_requested: bool,
    pub cancel_issued: bool,
    pub reserved_by: Option<String>,
}

impl OrderHolon {
    fn new(order: ProductOrder) -> Self {
        OrderHolon {
            order,
            next_step: 0,
            place: None,
            in_op: None,
            cancel_requested: false,
            cancel_issued: false,
            reserved_by: None,
        }
    }

    pub fn next_operation(&self) -> Option<&str> {
        self.order.routing.get(self.next_step).map(String::as_str)
    }

    /// Sort key: priority desc, due asc, id asc.
    pub fn rank(&self) -> (std::cmp::Reverse<i64>, u64, &str) {
        (
            std::cmp::Reverse(self.order.priority),
            self.order.due,
            &self.order.id,
        )
    }

    fn set_status(&mut self, next: OrderStatus) {
        if self.order.status.can_become(next) {
            self.order.status = next;
        } else {
            log::warn!(
                "order {}: ignoring status change {:?} -> {:?}",
                self.order.id,
                self.order.status,
                next
            );
        }
    }

    fn is_active(&self) -> bool {
        self.order.status == OrderStatus::Active
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ResourceHolon {
    pub operations: BTreeMap<String, u64>,
    pub down: bool,
    pub blocked: bool,
    pub busy: Option<String>,
}

impl ResourceHolon {
    pub fn available(&self) -> bool {
        !self.down && !self.blocked
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct ShuttleView {
    pub at: Option<String>,
    pub cargo: Option<String>,
    pub reserved: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ControlStats {
    pub rounds: u64,
    pub commands_issued: u64,
    pub directives_handled: u64,
    pub directives_rejected: u64,
    pub reschedules: u64,
    pub latency_total_us: u64,
    pub latency_max_us: u64,
}

#[derive(Debug, Clone)]
pub struct ReferenceControl {
    routes: Routes,
    input: String,
    output: String,
    pub(crate) orders: BTreeMap<String, OrderHolon>,
    pub(crate) resources: BTreeMap<String, ResourceHolon>,
    pub(crate) shuttles: BTreeMap<String, ShuttleView>,
    replan_pending: bool,
    latency: LatencyMode,
    last_latency_us: u64,
    last_command_count: u64,
    stats: ControlStats,
}

impl ReferenceControl {
    /// Builds the holons for `model` and the order book.
    pub fn initialize(
        model: &ShopModel,
        order_book: &[ProductOrder],
        latency: LatencyMode,
    ) -> Result<Self, ControlError> {
        let resources = model
            .machines
            .iter()
            .map(|m| {
                (
                    m.id.clone(),
                    ResourceHolon {
                        operations: m.operations.clone(),
                        down: false,
                        blocked: false,
                        busy: None,
                    },
                )
            })
            .collect();
        let shuttles = model
            .shuttle_ids()
            .into_iter()
            .map(|id| {
                (
                    id,
                    ShuttleView {
                        at: Some(model.shuttles.home.clone()),
                        ..ShuttleView::default()
                    },
                )
            })
            .collect();
        let mut control = ReferenceControl {
            routes: Routes::compute(model),
            input: model.stations.input.clone(),
            output: model.stations.output.clone(),
            orders: BTreeMap::new(),
            resources,
            shuttles,
            replan_pending: false,
            latency,
            last_latency_us: 0,
            last_command_count: 0,
            stats: ControlStats::default(),
        };
        for order in order_book {
            control.admit(order.clone())?;
        }
        Ok(control)
    }

    fn admit(&mut self, order: ProductOrder) -> Result<(), ControlError> {
        if self.orders.contains_key(&order.id) {
            return Err(ControlError::DuplicateOrder(order.id));
        }
        order.check().map_err(ControlError::InvalidOrder)?;
        if let Some(op) = order
            .routing
            .iter()
            .find(|op| !self.resources.values().any(|r| r.operations.contains_key(*op)))
        {
            return Err(ControlError::NoCapableMachine {
                order: order.id.clone(),
                operation: op.clone(),
            });
        }
        self.orders.insert(order.id.clone(), OrderHolon::new(order));
        Ok(())
    }

    pub fn order_count(&self) -> usize {
        self.orders.len()
    }

    pub fn resource_count(&self) -> usize {
        self.resources.len()
    }

    pub fn order_status(&self, id: &str) -> Option<OrderStatus> {
        self.orders.get(id).map(|h| h.order.status)
    }

    /// True when the control currently treats `machine` as unusable.
    pub fn believes_unavailable(&self, machine: &str) -> bool {
        self.resources.get(machine).is_some_and(|r| !r.available())
    }

    pub fn stats(&self) -> &ControlStats {
        &self.stats
    }

    pub(crate) fn distance(&self, from: &str, to: &str) -> Option<u64> {
        self.routes.distance(from, to)
    }

    pub(crate) fn output(&self) -> &str {
        &self.output
    }

    /// Reacts to one notification batch. The returned list always ends with
    /// an end-of-round command.
    pub fn on_notifications(&mut self, batch: &[SimEvent]) -> Vec<ControlCommand> {
        let started = Instant::now();
        for event in batch {
            self.observe(event);
        }
        if self.replan_pending {
            self.stats.reschedules += 1;
            self.replan_pending = false;
        }
        let mut commands = self.decide();
        let elapsed = match self.latency {
            LatencyMode::Off => 0,
            LatencyMode::Wall => started.elapsed().as_micros() as u64,
        };
        self.stats.rounds += 1;
        self.stats.commands_issued += commands.len() as u64;
        self.stats.latency_total_us += elapsed;
        self.stats.latency_max_us = self.stats.latency_max_us.max(elapsed);
        self.last_latency_us = elapsed;
        self.last_command_count = commands.len() as u64;
        commands.push(ControlCommand::end_of_round());
        commands
    }

    /// Data points describing the last round (FLOW2).
    pub fn round_data(&self) -> Vec<DataPoint> {
        vec![
            DataPoint::new("commands", self.last_command_count as i64),
            DataPoint::new("decision_latency_us", self.last_latency_us as i64),
        ]
    }

    fn observe(&mut self, e: &SimEvent) {
        let order = e.order().map(str::to_string);
        let machine = e.machine().map(str::to_string);
        let shuttle = e.shuttle().map(str::to_string);
        match e.kind {
            EventKind::OrderReleased => {
                if let Some(h) = order.and_then(|o| self.orders.get_mut(&o)) {
                    h.set_status(OrderStatus::Active);
                    h.place = Some(Place::Waiting(
                        e.node().unwrap_or(&self.input).to_string(),
                    ));
                }
            }
            EventKind::ShuttleDeparted => {
                if let Some(s) = shuttle.as_ref().and_then(|s| self.shuttles.get_mut(s)) {
                    s.at = None;
                    s.cargo = order.clone();
                }
                if let (Some(o), Some(s)) = (order, shuttle) {
                    if let Some(h) = self.orders.get_mut(&o) {
                        h.place = Some(Place::Aboard(s));
                        h.reserved_by = None;
                    }
                }
            }
            EventKind::ShuttleArrived => {
                let Some(s) = shuttle.and_then(|s| self.shuttles.get_mut(&s)) else {
                    return;
                };
                s.at = e.node().map(str::to_string);
                s.cargo = order;
                if let Some(reserved) = s.reserved.take() {
                    if let Some(h) = self.orders.get_mut(&reserved) {
                        h.reserved_by = None;
                    }
                }
            }
            EventKind::OpStarted => {
                if let Some(r) = machine.as_ref().and_then(|m| self.resources.get_mut(m)) {
                    r.busy = order.clone();
                }
                if let Some(h) = order.and_then(|o| self.orders.get_mut(&o)) {
                    h.in_op = machine;
                }
            }
            EventKind::OpFinished => {
                if let Some(r) = machine.as_ref().and_then(|m| self.resources.get_mut(m)) {
                    r.busy = None;
                }
                if let Some(h) = order.and_then(|o| self.orders.get_mut(&o)) {
                    h.in_op = None;
                    h.next_step += 1;
                }
            }
            EventKind::MachineDown => {
                if let Some(r) = machine.as_ref().and_then(|m| self.resources.get_mut(m)) {
                    if !r.down {
                        r.down = true;
                        self.replan_pending = true;
                    }
                    if order.is_some() {
                        r.busy = None;
                    }
                }
                if let Some(h) = order.and_then(|o| self.orders.get_mut(&o)) {
                    h.in_op = None;
                    self.replan_pending = true;
                }
            }
            EventKind::MachineUp => self.set_down(machine.as_deref(), false),
            EventKind::SupplyBlocked => self.set_blocked(machine.as_deref(), true),
            EventKind::SupplyRestored => self.set_blocked(machine.as_deref(), false),
            EventKind::ProductRejected => {
                self.replan_pending = true;
                if let Some(r) = machine.as_ref().and_then(|m| self.resources.get_mut(m)) {
                    r.busy = None;
                }
                let scrap = e.detail.as_deref() == Some("scrap");
                if scrap {
                    if let Some(s) = shuttle.and_then(|s| self.shuttles.get_mut(&s)) {
                        s.cargo = None;
                    }
                }
                if let Some(h) = order.and_then(|o| self.orders.get_mut(&o)) {
                    if scrap {
                        h.set_status(OrderStatus::Scrapped);
                        h.place = None;
                        h.in_op = None;
                    } else if h.in_op.take().is_none() {
                        // Redo the operation that was just completed.
                        h.next_step = h.next_step.saturating_sub(1);
                    }
                }
            }
            EventKind::OrderCompleted | EventKind::OrderCancelled => {
                if let Some(s) = shuttle.and_then(|s| self.shuttles.get_mut(&s)) {
                    s.cargo = None;
                }
                if let Some(h) = order.and_then(|o| self.orders.get_mut(&o)) {
                    h.set_status(if e.kind == EventKind::OrderCompleted {
                        OrderStatus::Completed
                    } else {
                        OrderStatus::Cancelled
                    });
                    h.place = None;
                }
            }
            EventKind::CommandRejected => {
                log::debug!("command rejected: {}", e.detail.as_deref().unwrap_or(""));
            }
        }
    }

    fn set_down(&mut self, machine: Option<&str>, down: bool) {
        if let Some(r) = machine.and_then(|m| self.resources.get_mut(m)) {
            if r.down != down {
                r.down = down;
                self.replan_pending = true;
            }
        }
    }

    fn set_blocked(&mut self, machine: Option<&str>, blocked: bool) {
        if let Some(r) = machine.and_then(|m| self.resources.get_mut(m)) {
            if r.blocked != blocked {
                r.blocked = blocked;
                self.replan_pending = true;
            }
        }
    }

    /// Applies a scenario-manager directive before the next round's decisions.
    pub fn apply_directive(&mut self, directive: &ControlDirective) -> Acknowledgement {
        self.stats.directives_handled += 1;
        let ack = self.directive_outcome(directive);
        if ack.ok {
            self.replan_pending = true;
        } else {
            self.stats.directives_rejected += 1;
        }
        ack
    }

    fn directive_outcome(&mut self, directive: &ControlDirective) -> Acknowledgement {
        match directive {
            ControlDirective::InsertOrder { order } => match self.admit(order.clone()) {
                Ok(()) => Acknowledgement::ok(),
                Err(e) => Acknowledgement::rejected(e.to_string()),
            },
            ControlDirective::CancelOrder { order } => match self.orders.get_mut(order) {
                None => Acknowledgement::rejected(format!("unknown order {order}")),
                Some(h) if h.order.status.is_terminal() => Acknowledgement::rejected(format!(
                    "order {order} is already {:?}",
                    h.order.status
                )),
                Some(h) => {
                    h.cancel_requested = true;
                    Acknowledgement::ok()
                }
            },
            ControlDirective::SetPriority { order, priority } => match self.orders.get_mut(order) {
                None => Acknowledgement::rejected(format!("unknown order {order}")),
                Some(h) => {
                    h.order.priority = *priority;
                    Acknowledgement::ok()
                }
            },
            ControlDirective::AnnounceBreakdown { machine } => match self.resources.get_mut(machine) {
                None => Acknowledgement::rejected(format!("unknown machine {machine}")),
                Some(r) => {
                    r.down = true;
                    Acknowledgement::ok()
                }
            },
            ControlDirective::AnnounceSupplyBlock { machine } => match self.resources.get_mut(machine) {
                None => Acknowledgement::rejected(format!("unknown machine {machine}")),
                Some(r) => {
                    r.blocked = true;
                    Acknowledgement::ok()
                }
            },
        }
    }

    /// Control-side measures (FLOW7).
    pub fn export_control_kpi(&self) -> Vec<DataPoint> {
        let s = &self.stats;
        let mean = s.latency_total_us.checked_div(s.rounds).unwrap_or(0);
        vec![
            DataPoint::new("commands_issued", s.commands_issued as i64),
            DataPoint::new("decision_latency_max_us", s.latency_max_us as i64),
            DataPoint::new("decision_latency_mean_us", mean as i64),
            DataPoint::new("directives_handled", s.directives_handled as i64),
            DataPoint::new("directives_rejected", s.directives_rejected as i64),
            DataPoint::new("reschedules", s.reschedules as i64),
            DataPoint::new("rounds", s.rounds as i64),
        ]
    }
}
