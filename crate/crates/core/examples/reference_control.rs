//! Feeds the reference control a hand-written notification batch and shows
//! the commands it answers with, before and after a breakdown announcement.

use holobench::control::{parse_order_book, ControlDirective, LatencyMode, ReferenceControl};
use holobench::fixtures::{MINICELL_MODEL, MINICELL_ORDERS};
use holobench::{load_model, EventKind, SimEvent, Subjects};

fn released(seq: u64, order: &str) -> SimEvent {
    SimEvent {
        time: 0,
        seq,
        kind: EventKind::OrderReleased,
        subjects: Subjects::default().order(order).node("IN"),
        detail: None,
    }
}

fn main() {
    let model = load_model(MINICELL_MODEL).unwrap();
    let orders = parse_order_book(MINICELL_ORDERS).unwrap();
    let mut control = ReferenceControl::initialize(&model, &orders, LatencyMode::Off).unwrap();
    println!("{} order holons, {} resource holons", control.order_count(), control.resource_count());

    let batch: Vec<SimEvent> = ["O1", "O2", "O3"].iter().enumerate().map(|(i, o)| released(i as u64, o)).collect();
    for command in control.on_notifications(&batch) {
        println!("-> {command:?}");
    }

    let ack = control.apply_directive(&ControlDirective::AnnounceBreakdown { machine: "M2".into() });
    println!("breakdown announced: {ack:?}; M2 unavailable = {}", control.believes_unavailable("M2"));
    println!("round data: {:?}", control.round_data());
    println!("exported KPIs: {:?}", control.export_control_kpi());
}
