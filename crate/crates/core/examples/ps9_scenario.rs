//! The M2 breakdown scenario: the breakdown is dated by the first shuttle
//! departure from M2, and the control is told at the same tick.

use holobench::control::parse_order_book;
use holobench::fixtures::{MINICELL_MODEL, MINICELL_ORDERS, SCENARIO_PS9};
use holobench::harness::{run_scenario, RunOptions};
use holobench::scenario::{load_scenario, ScenarioContext};
use holobench::{load_model, EventKind};

fn main() {
    let model = load_model(MINICELL_MODEL).unwrap();
    let orders = parse_order_book(MINICELL_ORDERS).unwrap();
    let ps9 = load_scenario(SCENARIO_PS9, &ScenarioContext::new(&model, &orders)).unwrap();
    println!("{} ({}): {}", ps9.id, ps9.category.unwrap(), ps9.description);

    for seed in [1, 2, 3] {
        let run = run_scenario("demo", &model, &orders, Some(&ps9), seed, &RunOptions::default()).unwrap();
        let first = |kind: EventKind| {
            run.events.iter().find(|e| e.kind == kind && e.machine() == Some("M2")).map(|e| e.time)
        };
        println!(
            "seed {seed}: departure from M2 at {:?}, M2 down at {:?}, back up at {:?}, makespan {}",
            first(EventKind::ShuttleDeparted),
            first(EventKind::MachineDown),
            first(EventKind::MachineUp),
            run.report.get("makespan").unwrap(),
        );
    }
}
