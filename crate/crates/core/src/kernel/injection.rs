use serde::{Deserialize, Serialize};

use super::{unknown, Action, Kernel, KernelError, OrderLocation, Outage};
use crate::event::{EventKind, SimEvent, Subjects, Tick};

/// What happens to a rejected product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectPolicy {
    /// The current operation is queued again.
    Rework,
    /// The order leaves the floor and is counted as scrapped.
    Scrap,
}

impl RejectPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectPolicy::Rework => "rework",
            RejectPolicy::Scrap => "scrap",
        }
    }
}

/// A disturbance applied to the emulation by the scenario manager.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Injection {
    MachineDown {
        target: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration: Option<Tick>,
    },
    MachineUp {
        target: String,
    },
    SupplyShortage {
        target: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration: Option<Tick>,
    },
    SupplyRestore {
        target: String,
    },
    ProductReject {
        target: String,
        policy: RejectPolicy,
    },
}

impl Injection {
    pub fn target(&self) -> &str {
        match self {
            Injection::MachineDown { target, .. }
            | Injection::MachineUp { target }
            | Injection::SupplyShortage { target, .. }
            | Injection::SupplyRestore { target }
            | Injection::ProductReject { target, .. } => target,
        }
    }

    pub fn duration(&self) -> Option<Tick> {
        match self {
            Injection::MachineDown { duration, .. } | Injection::SupplyShortage { duration, .. } => {
                *duration
            }
            _ => None,
        }
    }

    pub fn targets_order(&self) -> bool {
        matches!(self, Injection::ProductReject { .. })
    }

    pub fn kind_str(&self) -> &'static str {
        match self {
            Injection::MachineDown { .. } => "machine-down",
            Injection::MachineUp { .. } => "machine-up",
            Injection::SupplyShortage { .. } => "supply-shortage",
            Injection::SupplyRestore { .. } => "supply-restore",
            Injection::ProductReject { .. } => "product-reject",
        }
    }
}

impl Kernel {
    /// Applies a disturbance at the current clock and returns the events it
    /// caused. Repeating a disturbance that is already in effect is a no-op
    /// that records a warning.
    pub fn apply_injection(&mut self, injection: &Injection) -> Result<Vec<SimEvent>, KernelError> {
        if injection.duration() == Some(0) {
            return Err(KernelError::InvalidInjection(format!(
                "{} on {} needs a positive duration",
                injection.kind_str(),
                injection.target()
            )));
        }
        let target = injection.target().to_string();
        if injection.targets_order() {
            if !self.state.orders.contains_key(&target) {
                return Err(unknown("order", &target));
            }
        } else if !self.state.machines.contains_key(&target) {
            return Err(unknown("machine", &target));
        }

        let now = self.state.clock;
        let mut events = Vec::new();
        match injection {
            Injection::MachineDown { duration, .. } => {
                if self.state.machines[&target].down.is_some() {
                    self.warn(format!("t={now}: machine {target} is already down"));
                    return Ok(events);
                }
                let preempted = self.preempt(&target);
                let token = self.token();
                let until = duration.map(|d| now + d);
                self.state.machines.get_mut(&target).expect("checked").down =
                    Some(Outage { token, until });
                if let Some(until) = until {
                    self.schedule(
                        until,
                        EventKind::MachineUp,
                        Subjects::default().machine(&target),
                        Action::Repair {
                            machine: target.clone(),
                            token,
                        },
                    );
                }
                let detail = preempted.as_ref().map(|(_, op)| format!("preempted {op}"));
                let subjects = Subjects::default()
                    .machine(&target)
                    .order_opt(preempted.map(|(order, _)| order));
                events.push(self.emit(EventKind::MachineDown, subjects, detail));
            }
            Injection::MachineUp { .. } => {
                if self.state.machines[&target].down.is_none() {
                    self.warn(format!("t={now}: machine {target} is not down"));
                    return Ok(events);
                }
                if let Some(outage) = self.state.machines.get_mut(&target).expect("checked").down.take() {
                    self.cancel_pending(outage.token);
                }
                let subjects = Subjects::default().machine(&target);
                events.push(self.emit(EventKind::MachineUp, subjects, None));
            }
            Injection::SupplyShortage { duration, .. } => {
                if self.state.machines[&target].blocked.is_some() {
                    self.warn(format!("t={now}: machine {target} is already supply-blocked"));
                    return Ok(events);
                }
                let token = self.token();
                let until = duration.map(|d| now + d);
                self.state.machines.get_mut(&target).expect("checked").blocked =
                    Some(Outage { token, until });
                if let Some(until) = until {
                    self.schedule(
                        until,
                        EventKind::SupplyRestored,
                        Subjects::default().machine(&target),
                        Action::Restore {
                            machine: target.clone(),
                            token,
                        },
                    );
                }
                let subjects = Subjects::default().machine(&target);
                events.push(self.emit(EventKind::SupplyBlocked, subjects, None));
            }
            Injection::SupplyRestore { .. } => {
                if self.state.machines[&target].blocked.is_none() {
                    self.warn(format!("t={now}: machine {target} is not supply-blocked"));
                    return Ok(events);
                }
                if let Some(outage) = self.state.machines.get_mut(&target).expect("checked").blocked.take() {
                    self.cancel_pending(outage.token);
                }
                let subjects = Subjects::default().machine(&target);
                events.push(self.emit(EventKind::SupplyRestored, subjects, None));
            }
            Injection::ProductReject { policy, .. } => {
                let location = self.state.orders[&target].clone();
                let (machine, shuttle) = match location {
                    OrderLocation::Processing { machine, shuttle } => {
                        self.preempt(&machine);
                        (Some(machine), Some(shuttle))
                    }
                    OrderLocation::OnShuttle { shuttle } => (None, Some(shuttle)),
                    OrderLocation::Waiting { .. } => (None, None),
                    OrderLocation::Scheduled { .. } => {
                        self.warn(format!("t={now}: order {target} is not released yet"));
                        return Ok(events);
                    }
                    _ => {
                        self.warn(format!("t={now}: order {target} already left the floor"));
                        return Ok(events);
                    }
                };
                if *policy == RejectPolicy::Scrap {
                    if let Some(s) = &shuttle {
                        self.state.shuttles.get_mut(s).expect("known shuttle").cargo = None;
                    }
                    self.state.orders.insert(target.clone(), OrderLocation::Scrapped);
                }
                let mut subjects = Subjects::default().order(&target);
                subjects.machine = machine;
                subjects.shuttle = shuttle;
                events.push(self.emit(
                    EventKind::ProductRejected,
                    subjects,
                    Some(policy.as_str().to_string()),
                ));
            }
        }
        Ok(events)
    }

    /// Drops the operation in progress on `machine`, if any. The order stays
    /// on its shuttle at the machine and must be started again from zero.
    fn preempt(&mut self, machine: &str) -> Option<(String, String)> {
        let work = self.state.machines.get_mut(machine)?.work.take()?;
        self.cancel_pending(work.token);
        self.state.orders.insert(
            work.order.clone(),
            OrderLocation::OnShuttle {
                shuttle: work.shuttle,
            },
        );
        Some((work.order, work.operation))
    }

    fn warn(&mut self, message: String) {
        log::warn!("{message}");
        self.state.warnings.push(message);
    }
}
