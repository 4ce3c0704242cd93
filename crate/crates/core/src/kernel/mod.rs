//! Deterministic discrete-event emulation of the shop floor.
//!
//! The kernel owns the clock. Each [`Kernel::advance`] applies a round of
//! control commands, moves the clock to the next pending time and returns
//! every event at that time as one batch. Events at the same tick are ordered
//! by (kind name, subject ids, insertion order), and `seq` numbers are handed
//! out without gaps in emission order.
//!
//! The kernel knows nothing about routings. Products ride on shuttles (one
//! product per shuttle), are processed while parked at a machine node, and
//! complete when their shuttle reaches the output station.

mod injection;
mod snapshot;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use injection::{Injection, RejectPolicy};

use crate::control::ControlCommand;
use crate::event::{EventKind, SimEvent, Subjects, Tick};
use crate::model::{Routes, ShopModel};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("unknown {what} `{id}`")]
    UnknownEntity { what: &'static str, id: String },
    #[error("no route from {from} to {to}")]
    Unroutable { from: String, to: String },
    #[error("order `{0}` is already known to the emulation")]
    DuplicateOrder(String),
    #[error("invalid injection: {0}")]
    InvalidInjection(String),
    #[error("unreadable snapshot: {0}")]
    Snapshot(String),
}

fn unknown(what: &'static str, id: &str) -> KernelError {
    KernelError::UnknownEntity {
        what,
        id: id.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Work {
    pub order: String,
    pub shuttle: String,
    pub operation: String,
    pub finish: Tick,
    pub token: u64,
}

/// An outage (breakdown or supply shortage) with an optional scheduled end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outage {
    pub token: u64,
    pub until: Option<Tick>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineState {
    pub work: Option<Work>,
    pub down: Option<Outage>,
    pub blocked: Option<Outage>,
}

/// Exclusive status view of a machine; a down machine reports `Down` even
/// when its supply is also blocked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MachineStatus {
    Idle,
    Busy { order: String, until: Tick },
    Down { until: Option<Tick> },
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum Position {
    At { node: String },
    Moving { from: String, to: String, arrival: Tick },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuttleState {
    pub position: Position,
    pub cargo: Option<String>,
}

impl ShuttleState {
    pub fn node(&self) -> Option<&str> {
        match &self.position {
            Position::At { node } => Some(node),
            Position::Moving { .. } => None,
        }
    }
}

/// Where an order is. Terminal variants keep the id reserved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum OrderLocation {
    Scheduled { at: Tick },
    Waiting { node: String },
    OnShuttle { shuttle: String },
    Processing { machine: String, shuttle: String },
    Completed,
    Cancelled,
    Scrapped,
}

impl OrderLocation {
    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            OrderLocation::Completed | OrderLocation::Cancelled | OrderLocation::Scrapped
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum Action {
    /// Already applied; only the event remains to be emitted.
    Emit {
        kind: EventKind,
        subjects: Subjects,
        detail: Option<String>,
    },
    Release { order: String },
    Arrive { shuttle: String },
    Finish { machine: String, token: u64 },
    Repair { machine: String, token: u64 },
    Restore { machine: String, token: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pending {
    pub time: Tick,
    pub kind: EventKind,
    pub subject: String,
    pub insert: u64,
    pub action: Action,
}

impl Pending {
    fn key(&self) -> (Tick, &'static str, &str, u64) {
        (self.time, self.kind.as_str(), &self.subject, self.insert)
    }
}

/// Complete mutable state of the emulation. Serializes losslessly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelState {
    pub model: ShopModel,
    pub clock: Tick,
    pub next_seq: u64,
    pub next_insert: u64,
    pub next_token: u64,
    pub pending: Vec<Pending>,
    pub machines: BTreeMap<String, MachineState>,
    pub shuttles: BTreeMap<String, ShuttleState>,
    pub orders: BTreeMap<String, OrderLocation>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kernel {
    state: KernelState,
    routes: Routes,
}

impl Kernel {
    pub fn new(model: ShopModel) -> Self {
        let machines = model
            .machines
            .iter()
            .map(|m| (m.id.clone(), MachineState::default()))
            .collect();
        let shuttles = model
            .shuttle_ids()
            .into_iter()
            .map(|id| {
                (
                    id,
                    ShuttleState {
                        position: Position::At {
                            node: model.shuttles.home.clone(),
                        },
                        cargo: None,
                    },
                )
            })
            .collect();
        let routes = Routes::compute(&model);
        Kernel {
            state: KernelState {
                model,
                clock: 0,
                next_seq: 0,
                next_insert: 0,
                next_token: 0,
                pending: Vec::new(),
                machines,
                shuttles,
                orders: BTreeMap::new(),
                warnings: Vec::new(),
            },
            routes,
        }
    }

    pub fn from_state(state: KernelState) -> Self {
        let routes = Routes::compute(&state.model);
        Kernel { state, routes }
    }

    pub fn state(&self) -> &KernelState {
        &self.state
    }

    pub fn model(&self) -> &ShopModel {
        &self.state.model
    }

    pub fn clock(&self) -> Tick {
        self.state.clock
    }

    pub fn warnings(&self) -> &[String] {
        &self.state.warnings
    }

    pub fn next_event_time(&self) -> Option<Tick> {
        self.state.pending.first().map(|p| p.time)
    }

    /// No pending events.
    pub fn is_idle(&self) -> bool {
        self.state.pending.is_empty()
    }

    /// Orders known to the emulation that are not yet completed, cancelled
    /// or scrapped (including those whose release is still scheduled).
    pub fn live_orders(&self) -> Vec<&str> {
        self.state
            .orders
            .iter()
            .filter(|(_, loc)| !loc.is_terminal())
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn order_location(&self, order: &str) -> Option<&OrderLocation> {
        self.state.orders.get(order)
    }

    pub fn shuttle(&self, id: &str) -> Option<&ShuttleState> {
        self.state.shuttles.get(id)
    }

    pub fn machine_status(&self, id: &str) -> Option<MachineStatus> {
        let m = self.state.machines.get(id)?;
        Some(if let Some(down) = &m.down {
            MachineStatus::Down { until: down.until }
        } else if m.blocked.is_some() {
            MachineStatus::Blocked
        } else if let Some(w) = &m.work {
            MachineStatus::Busy {
                order: w.order.clone(),
                until: w.finish,
            }
        } else {
            MachineStatus::Idle
        })
    }

    /// Announces an order to the emulation; it appears at the input station
    /// at `at` (or now, if `at` is in the past).
    pub fn schedule_release(&mut self, order: &str, at: Tick) -> Result<(), KernelError> {
        if self.state.orders.contains_key(order) {
            return Err(KernelError::DuplicateOrder(order.to_string()));
        }
        let at = at.max(self.state.clock);
        self.state
            .orders
            .insert(order.to_string(), OrderLocation::Scheduled { at });
        self.schedule(
            at,
            EventKind::OrderReleased,
            Subjects::default().order(order),
            Action::Release {
                order: order.to_string(),
            },
        );
        Ok(())
    }

    /// Applies `commands`, then returns every event at the next pending time.
    /// With nothing pending the batch is empty and the clock does not move.
    pub fn advance(&mut self, commands: &[ControlCommand]) -> Result<Vec<SimEvent>, KernelError> {
        self.advance_until(commands, None)
    }

    /// Like [`Kernel::advance`], but never moves past `horizon`: when the next
    /// pending time is later than `horizon` (or nothing is pending), the clock
    /// moves to `horizon` and the batch is empty. Used to honor timed triggers.
    pub fn advance_until(
        &mut self,
        commands: &[ControlCommand],
        horizon: Option<Tick>,
    ) -> Result<Vec<SimEvent>, KernelError> {
        for command in commands {
            self.apply_command(command)?;
        }
        match (self.next_event_time(), horizon) {
            (Some(next), h) if h.is_none_or(|h| next <= h) => Ok(self.pop_batch(next)),
            (_, Some(h)) => {
                self.state.clock = self.state.clock.max(h);
                Ok(Vec::new())
            }
            _ => Ok(Vec::new()),
        }
    }

    fn pop_batch(&mut self, time: Tick) -> Vec<SimEvent> {
        debug_assert!(time >= self.state.clock);
        self.state.clock = time;
        let mut batch = Vec::new();
        while self.state.pending.first().is_some_and(|p| p.time == time) {
            let pending = self.state.pending.remove(0);
            self.execute(pending.action, &mut batch);
        }
        batch
    }

    fn execute(&mut self, action: Action, out: &mut Vec<SimEvent>) {
        match action {
            Action::Emit {
                kind,
                subjects,
                detail,
            } => out.push(self.emit(kind, subjects, detail)),
            Action::Release { order } => {
                let input = self.state.model.stations.input.clone();
                if let Some(loc) = self.state.orders.get_mut(&order) {
                    if matches!(loc, OrderLocation::Scheduled { .. }) {
                        *loc = OrderLocation::Waiting {
                            node: input.clone(),
                        };
                        let subjects = Subjects::default().order(&order).node(input);
                        out.push(self.emit(EventKind::OrderReleased, subjects, None));
                    }
                }
            }
            Action::Arrive { shuttle } => {
                let state = self.state.shuttles.get_mut(&shuttle).expect("known shuttle");
                let Position::Moving { to, .. } = state.position.clone() else {
                    return;
                };
                state.position = Position::At { node: to.clone() };
                let cargo = state.cargo.clone();
                let subjects = self
                    .node_subjects(&to)
                    .shuttle(&shuttle)
                    .order_opt(cargo.clone());
                out.push(self.emit(EventKind::ShuttleArrived, subjects, None));
                if to == self.state.model.stations.output {
                    if let Some(order) = cargo {
                        self.state.shuttles.get_mut(&shuttle).expect("known shuttle").cargo = None;
                        self.state
                            .orders
                            .insert(order.clone(), OrderLocation::Completed);
                        let subjects = Subjects::default().order(order).shuttle(&shuttle).node(to);
                        out.push(self.emit(EventKind::OrderCompleted, subjects, None));
                    }
                }
            }
            Action::Finish { machine, token } => {
                let m = self.state.machines.get_mut(&machine).expect("known machine");
                if m.work.as_ref().is_none_or(|w| w.token != token) {
                    return;
                }
                let work = m.work.take().expect("checked above");
                self.state.orders.insert(
                    work.order.clone(),
                    OrderLocation::OnShuttle {
                        shuttle: work.shuttle.clone(),
                    },
                );
                let subjects = Subjects::default()
                    .machine(&machine)
                    .order(work.order)
                    .shuttle(work.shuttle)
                    .node(&machine);
                out.push(self.emit(EventKind::OpFinished, subjects, Some(work.operation)));
            }
            Action::Repair { machine, token } => {
                let m = self.state.machines.get_mut(&machine).expect("known machine");
                if m.down.as_ref().is_some_and(|o| o.token == token) {
                    m.down = None;
                    let subjects = Subjects::default().machine(&machine);
                    out.push(self.emit(EventKind::MachineUp, subjects, None));
                }
            }
            Action::Restore { machine, token } => {
                let m = self.state.machines.get_mut(&machine).expect("known machine");
                if m.blocked.as_ref().is_some_and(|o| o.token == token) {
                    m.blocked = None;
                    let subjects = Subjects::default().machine(&machine);
                    out.push(self.emit(EventKind::SupplyRestored, subjects, None));
                }
            }
        }
    }

    fn emit(&mut self, kind: EventKind, subjects: Subjects, detail: Option<String>) -> SimEvent {
        let seq = self.state.next_seq;
        self.state.next_seq += 1;
        SimEvent {
            time: self.state.clock,
            seq,
            kind,
            subjects,
            detail,
        }
    }

    fn schedule(&mut self, time: Tick, kind: EventKind, subjects: Subjects, action: Action) {
        let pending = Pending {
            time,
            kind,
            subject: subjects.sort_key(),
            insert: self.state.next_insert,
            action,
        };
        self.state.next_insert += 1;
        let at = self
            .state
            .pending
            .partition_point(|p| p.key() < pending.key());
        self.state.pending.insert(at, pending);
    }

    fn schedule_now(&mut self, kind: EventKind, subjects: Subjects, detail: Option<String>) {
        let now = self.state.clock;
        self.schedule(
            now,
            kind,
            subjects.clone(),
            Action::Emit {
                kind,
                subjects,
                detail,
            },
        );
    }

    /// Drops the pending action carrying `token` (an invalidated finish,
    /// repair or restore).
    fn cancel_pending(&mut self, token: u64) {
        self.state.pending.retain(|p| {
            !matches!(
                p.action,
                Action::Finish { token: t, .. } | Action::Repair { token: t, .. } | Action::Restore { token: t, .. }
                    if t == token
            )
        });
    }

    fn token(&mut self) -> u64 {
        self.state.next_token += 1;
        self.state.next_token
    }

    fn node_subjects(&self, node: &str) -> Subjects {
        let s = Subjects::default().node(node);
        if self.state.model.is_machine(node) {
            s.machine(node)
        } else {
            s
        }
    }

    fn reject(&mut self, command: &ControlCommand, reason: String) {
        let subjects = match command {
            ControlCommand::MoveShuttle { shuttle, load, .. } => {
                Subjects::default().shuttle(shuttle).order_opt(load.clone())
            }
            ControlCommand::StartOp { machine, order, .. } => {
                Subjects::default().machine(machine).order(order)
            }
            ControlCommand::CancelOrder { order, .. } => Subjects::default().order(order),
            ControlCommand::EndOfRound { .. } => Subjects::default(),
        };
        log::debug!("t={} rejected {}: {reason}", self.state.clock, command.kind_str());
        self.schedule_now(
            EventKind::CommandRejected,
            subjects,
            Some(format!("{}: {reason}", command.kind_str())),
        );
    }

    fn apply_command(&mut self, command: &ControlCommand) -> Result<(), KernelError> {
        match command {
            ControlCommand::MoveShuttle {
                shuttle, to, load, ..
            } => self.move_shuttle(command, shuttle, to, load.as_deref()),
            ControlCommand::StartOp {
                machine,
                order,
                operation,
                ..
            } => self.start_op(command, machine, order, operation),
            ControlCommand::CancelOrder { order, .. } => self.cancel_order(command, order),
            ControlCommand::EndOfRound { .. } => Ok(()),
        }
    }

    fn move_shuttle(
        &mut self,
        command: &ControlCommand,
        shuttle: &str,
        to: &str,
        load: Option<&str>,
    ) -> Result<(), KernelError> {
        let state = self
            .state
            .shuttles
            .get(shuttle)
            .ok_or_else(|| unknown("shuttle", shuttle))?
            .clone();
        if !self.state.model.has_node(to) {
            return Err(unknown("node", to));
        }
        if let Some(order) = load {
            if !self.state.orders.contains_key(order) {
                return Err(unknown("order", order));
            }
        }
        let Some(from) = state.node().map(str::to_string) else {
            self.reject(command, format!("shuttle {shuttle} is moving"));
            return Ok(());
        };
        if from == to {
            self.reject(command, format!("shuttle {shuttle} is already at {to}"));
            return Ok(());
        }
        let Some(travel) = self.routes.distance(&from, to) else {
            return Err(KernelError::Unroutable {
                from,
                to: to.to_string(),
            });
        };
        if let Some(cargo) = &state.cargo {
            if matches!(
                self.state.orders.get(cargo),
                Some(OrderLocation::Processing { .. })
            ) {
                self.reject(command, format!("order {cargo} is being processed"));
                return Ok(());
            }
        }
        let mut cargo = state.cargo.clone();
        if let Some(order) = load {
            if let Some(held) = &cargo {
                self.reject(command, format!("shuttle {shuttle} already carries {held}"));
                return Ok(());
            }
            match self.state.orders.get(order) {
                Some(OrderLocation::Waiting { node }) if *node == from => {}
                _ => {
                    self.reject(command, format!("order {order} is not waiting at {from}"));
                    return Ok(());
                }
            }
            self.state.orders.insert(
                order.to_string(),
                OrderLocation::OnShuttle {
                    shuttle: shuttle.to_string(),
                },
            );
            cargo = Some(order.to_string());
        }
        let arrival = self.state.clock + travel;
        let s = self.state.shuttles.get_mut(shuttle).expect("checked above");
        s.cargo = cargo.clone();
        s.position = Position::Moving {
            from: from.clone(),
            to: to.to_string(),
            arrival,
        };
        let departed = self
            .node_subjects(&from)
            .shuttle(shuttle)
            .order_opt(cargo.clone());
        self.schedule_now(EventKind::ShuttleDeparted, departed, None);
        let arriving = self.node_subjects(to).shuttle(shuttle).order_opt(cargo);
        self.schedule(
            arrival,
            EventKind::ShuttleArrived,
            arriving,
            Action::Arrive {
                shuttle: shuttle.to_string(),
            },
        );
        Ok(())
    }

    fn start_op(
        &mut self,
        command: &ControlCommand,
        machine: &str,
        order: &str,
        operation: &str,
    ) -> Result<(), KernelError> {
        let m = self
            .state
            .machines
            .get(machine)
            .ok_or_else(|| unknown("machine", machine))?
            .clone();
        let location = self
            .state
            .orders
            .get(order)
            .ok_or_else(|| unknown("order", order))?
            .clone();
        if m.down.is_some() {
            self.reject(command, format!("machine {machine} is down"));
            return Ok(());
        }
        if m.blocked.is_some() {
            self.reject(command, format!("machine {machine} is supply-blocked"));
            return Ok(());
        }
        if let Some(w) = &m.work {
            self.reject(command, format!("machine {machine} is busy with {}", w.order));
            return Ok(());
        }
        let Some(duration) = self
            .state
            .model
            .machine(machine)
            .and_then(|spec| spec.duration_of(operation))
        else {
            self.reject(command, format!("machine {machine} cannot perform {operation}"));
            return Ok(());
        };
        let shuttle = match &location {
            OrderLocation::OnShuttle { shuttle }
                if self.state.shuttles[shuttle].node() == Some(machine) =>
            {
                shuttle.clone()
            }
            _ => {
                self.reject(command, format!("order {order} is not parked at {machine}"));
                return Ok(());
            }
        };
        let token = self.token();
        let finish = self.state.clock + duration;
        self.state.machines.get_mut(machine).expect("checked").work = Some(Work {
            order: order.to_string(),
            shuttle: shuttle.clone(),
            operation: operation.to_string(),
            finish,
            token,
        });
        self.state.orders.insert(
            order.to_string(),
            OrderLocation::Processing {
                machine: machine.to_string(),
                shuttle: shuttle.clone(),
            },
        );
        let subjects = Subjects::default()
            .machine(machine)
            .order(order)
            .shuttle(shuttle)
            .node(machine);
        self.schedule_now(
            EventKind::OpStarted,
            subjects.clone(),
            Some(operation.to_string()),
        );
        self.schedule(
            finish,
            EventKind::OpFinished,
            subjects,
            Action::Finish {
                machine: machine.to_string(),
                token,
            },
        );
        Ok(())
    }

    fn cancel_order(&mut self, command: &ControlCommand, order: &str) -> Result<(), KernelError> {
        let location = self
            .state
            .orders
            .get(order)
            .ok_or_else(|| unknown("order", order))?
            .clone();
        let subjects = match location {
            OrderLocation::Waiting { node } => Subjects::default().order(order).node(node),
            OrderLocation::OnShuttle { shuttle } => {
                let s = self.state.shuttles.get_mut(&shuttle).expect("known shuttle");
                let Some(node) = s.node().map(str::to_string) else {
                    self.reject(command, format!("order {order} is in transit"));
                    return Ok(());
                };
                s.cargo = None;
                Subjects::default().order(order).shuttle(shuttle).node(node)
            }
            OrderLocation::Processing { machine, .. } => {
                self.reject(command, format!("order {order} is being processed on {machine}"));
                return Ok(());
            }
            OrderLocation::Scheduled { .. } => {
                self.reject(command, format!("order {order} is not released yet"));
                return Ok(());
            }
            _ => {
                self.reject(command, format!("order {order} already left the floor"));
                return Ok(());
            }
        };
        self.state
            .orders
            .insert(order.to_string(), OrderLocation::Cancelled);
        self.schedule_now(EventKind::OrderCancelled, subjects, None);
        Ok(())
    }
}

#[cfg(test)]
mod tests;
