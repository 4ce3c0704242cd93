//! Runs one scenario through the interface layer, prints the first wire
//! lines, then replays the recorded log against a fresh control and checks
//! that it makes the same decisions.

use holobench::control::{parse_order_book, ControlEndpoint, LatencyMode, ReferenceControl};
use holobench::fixtures::{MINICELL_MODEL, MINICELL_ORDERS};
use holobench::harness::{run_scenario, RunOptions};
use holobench::il::{command_log, replay_backend, Loopback, Role, SessionConfig};
use holobench::load_model;

fn main() {
    let model = load_model(MINICELL_MODEL).unwrap();
    let orders = parse_order_book(MINICELL_ORDERS).unwrap();
    let run = run_scenario("demo", &model, &orders, None, 1, &RunOptions::default()).unwrap();
    for line in run.log.lines().iter().take(8) {
        println!("{}", line.trim_end());
    }
    println!("... {} lines in total, sha256 {}", run.log.len(), run.log.hash());

    let text = run.log.text();
    let backend = replay_backend(&text).unwrap();
    let control = ReferenceControl::initialize(&model, &orders, LatencyMode::Off).unwrap();
    let peer = Loopback::new(ControlEndpoint::new(control, model.hash()));
    let replayed = backend
        .run(SessionConfig::new(Role::Emulation, model.hash(), "replay"), Box::new(peer))
        .unwrap();
    let same = command_log(&text) == command_log(&replayed.text());
    println!("replayed {} rounds; identical commands: {same}", backend.rounds());
}
