//! Puts the control behind a Unix socket in its own thread, the way an
//! external control system would connect, and runs PS9 against it.

use std::os::unix::net::UnixStream;
use std::time::Duration;

use holobench::control::{parse_order_book, ControlEndpoint, LatencyMode, ReferenceControl};
use holobench::fixtures::{MINICELL_MODEL, MINICELL_ORDERS, SCENARIO_PS9};
use holobench::harness::{run_with_transport, RunOptions};
use holobench::il::{serve, StreamTransport};
use holobench::load_model;
use holobench::scenario::{load_scenario, ScenarioContext};

fn main() -> std::io::Result<()> {
    let model = load_model(MINICELL_MODEL).unwrap();
    let orders = parse_order_book(MINICELL_ORDERS).unwrap();
    let ps9 = load_scenario(SCENARIO_PS9, &ScenarioContext::new(&model, &orders)).unwrap();

    let (ours, theirs) = UnixStream::pair()?;
    let control = ReferenceControl::initialize(&model, &orders, LatencyMode::Off).unwrap();
    let mut endpoint = ControlEndpoint::new(control, model.hash());
    let server = std::thread::spawn(move || {
        let mut transport = StreamTransport::new(theirs.try_clone().expect("socket"), theirs);
        serve(&mut endpoint, &mut transport)
    });

    let options = RunOptions {
        timeout: Some(Duration::from_secs(5)),
        ..RunOptions::default()
    };
    let transport = StreamTransport::new(ours.try_clone()?, ours);
    let run = run_with_transport("socket", &model, &orders, Some(&ps9), 1, &options, Box::new(transport)).unwrap();
    server.join().expect("control thread").expect("control served");
    println!("{:?}: makespan {:?}", run.record.status, run.report.get("makespan"));
    Ok(())
}
