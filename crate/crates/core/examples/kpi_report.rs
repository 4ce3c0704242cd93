//! Prints the KPI report of the undisturbed run and shows that the same
//! numbers come back when recomputed from the session log alone.

use holobench::control::parse_order_book;
use holobench::fixtures::{MINICELL_MODEL, MINICELL_ORDERS};
use holobench::harness::{run_scenario, RunOptions};
use holobench::kpi::{recompute_from_log, reports_to_csv};
use holobench::load_model;
use holobench::scenario::Scenario;

fn main() {
    let model = load_model(MINICELL_MODEL).unwrap();
    let orders = parse_order_book(MINICELL_ORDERS).unwrap();
    let run = run_scenario("demo", &model, &orders, Some(&Scenario::null()), 1, &RunOptions::default()).unwrap();
    println!("{}", run.report.to_json());

    let recomputed = recompute_from_log(&model, &run.log.text()).unwrap();
    println!("recomputed from log matches: {}", recomputed == run.report);
    print!("{}", reports_to_csv(&[run.report]));
}
