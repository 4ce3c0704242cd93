use std::collections::BTreeSet;

use super::{ControlCommand, Place, ReferenceControl};

impl ReferenceControl {
    /// Nearest available machine for the order's next step, seen from
    /// `from`; the output station once the routing is done. `None` means the
    /// order has to wait.
    fn destination(&self, order: &str, from: &str) -> Option<String> {
        let holon = &self.orders[order];
        let Some(op) = holon.next_operation() else {
            return Some(self.output().to_string());
        };
        self.resources
            .iter()
            .filter(|(_, r)| r.available() && r.operations.contains_key(op))
            .filter_map(|(id, _)| self.distance(from, id).map(|d| (d, id)))
            .min()
            .map(|(_, id)| id.clone())
    }

    pub(super) fn decide(&mut self) -> Vec<ControlCommand> {
        let mut commands = Vec::new();
        let mut handled: BTreeSet<String> = BTreeSet::new();

        // Cancellations take effect once the order is idle and stationary.
        let cancellable: Vec<String> = self
            .orders
            .values()
            .filter(|h| h.is_active() && h.cancel_requested && !h.cancel_issued && h.in_op.is_none())
            .filter(|h| match &h.place {
                Some(Place::Waiting(_)) => true,
                Some(Place::Aboard(s)) => self.shuttles[s].at.is_some(),
                None => false,
            })
            .map(|h| h.order.id.clone())
            .collect();
        for id in cancellable {
            let h = self.orders.get_mut(&id).expect("listed above");
            h.cancel_issued = true;
            if let Some(shuttle) = h.reserved_by.take() {
                self.shuttles.get_mut(&shuttle).expect("known shuttle").reserved = None;
            }
            commands.push(ControlCommand::CancelOrder {
                order: id.clone(),
                holon: format!("order:{id}"),
            });
            handled.insert(id);
        }

        // Resource holons pick the best order parked at them.
        let machines: Vec<String> = self
            .resources
            .iter()
            .filter(|(_, r)| r.available() && r.busy.is_none())
            .map(|(id, _)| id.clone())
            .collect();
        for machine in machines {
            let resource = &self.resources[&machine];
            let best = self
                .orders
                .values()
                .filter(|h| h.is_active() && !h.cancel_requested && h.in_op.is_none())
                .filter(|h| !handled.contains(&h.order.id))
                .filter(|h| match &h.place {
                    Some(Place::Aboard(s)) => self.shuttles[s].at.as_deref() == Some(machine.as_str()),
                    _ => false,
                })
                .filter(|h| {
                    h.next_operation()
                        .is_some_and(|op| resource.operations.contains_key(op))
                })
                .min_by(|a, b| a.rank().cmp(&b.rank()));
            if let Some(h) = best {
                let order = h.order.id.clone();
                let operation = h.next_operation().expect("filtered").to_string();
                commands.push(ControlCommand::StartOp {
                    machine: machine.clone(),
                    order: order.clone(),
                    operation,
                    holon: format!("resource:{machine}"),
                });
                handled.insert(order);
            }
        }

        // Loaded shuttles head for the next step.
        let mut loaded: Vec<(String, String, String)> = self
            .shuttles
            .iter()
            .filter_map(|(id, s)| Some((id.clone(), s.at.clone()?, s.cargo.clone()?)))
            .filter(|(_, _, order)| {
                self.orders.get(order).is_some_and(|h| {
                    h.is_active() && !h.cancel_requested && h.in_op.is_none() && !handled.contains(order)
                })
            })
            .collect();
        loaded.sort_by(|a, b| self.orders[&a.2].rank().cmp(&self.orders[&b.2].rank()));
        for (shuttle, at, order) in loaded {
            if let Some(to) = self.destination(&order, &at) {
                if to != at {
                    commands.push(ControlCommand::MoveShuttle {
                        shuttle,
                        to,
                        load: None,
                        holon: format!("order:{order}"),
                    });
                }
            }
            handled.insert(order);
        }

        // Empty shuttles fetch waiting orders, nearest pair first.
        let mut pairs = Vec::new();
        for (shuttle, view) in &self.shuttles {
            let (Some(at), None, None) = (&view.at, &view.cargo, &view.reserved) else {
                continue;
            };
            for h in self.orders.values() {
                let Some(Place::Waiting(node)) = &h.place else {
                    continue;
                };
                if !h.is_active() || h.cancel_requested || h.reserved_by.is_some() {
                    continue;
                }
                if handled.contains(&h.order.id) {
                    continue;
                }
                if let Some(d) = self.distance(at, node) {
                    let (priority, due, _) = h.rank();
                    let rank = (priority, due, h.order.id.clone());
                    pairs.push((d, node.clone(), rank, shuttle.clone(), h.order.id.clone()));
                }
            }
        }
        pairs.sort();
        let mut busy_shuttles = BTreeSet::new();
        let mut picks = Vec::new();
        for (d, node, _, shuttle, order) in pairs {
            if busy_shuttles.contains(&shuttle) || handled.contains(&order) {
                continue;
            }
            if d == 0 {
                let to = match self.destination(&order, &node) {
                    Some(to) if to != node => to,
                    _ => {
                        handled.insert(order);
                        continue;
                    }
                };
                picks.push(ControlCommand::MoveShuttle {
                    shuttle: shuttle.clone(),
                    to,
                    load: Some(order.clone()),
                    holon: format!("order:{order}"),
                });
            } else {
                picks.push(ControlCommand::MoveShuttle {
                    shuttle: shuttle.clone(),
                    to: node,
                    load: None,
                    holon: format!("order:{order}"),
                });
                self.shuttles.get_mut(&shuttle).expect("known shuttle").reserved = Some(order.clone());
                self.orders.get_mut(&order).expect("known order").reserved_by = Some(shuttle.clone());
            }
            busy_shuttles.insert(shuttle);
            handled.insert(order);
        }
        commands.extend(picks);
        commands
    }
}
