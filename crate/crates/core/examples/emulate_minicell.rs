//! Drives the bare emulation kernel with the reference control in lock-step,
//! without the interface layer, and prints the event stream.

use holobench::control::{parse_order_book, LatencyMode, ReferenceControl};
use holobench::fixtures::{MINICELL_MODEL, MINICELL_ORDERS};
use holobench::kernel::Kernel;
use holobench::load_model;

fn main() {
    let model = load_model(MINICELL_MODEL).expect("shipped model");
    let orders = parse_order_book(MINICELL_ORDERS).expect("shipped orders");
    let mut control = ReferenceControl::initialize(&model, &orders, LatencyMode::Off).expect("valid book");
    let mut kernel = Kernel::new(model);
    for order in &orders {
        kernel.schedule_release(&order.id, order.release).expect("fresh order");
    }

    let mut commands = Vec::new();
    loop {
        let batch = kernel.advance(&commands).expect("legal commands");
        if batch.is_empty() && kernel.is_idle() {
            break;
        }
        for e in &batch {
            println!("t={:>4} #{:<3} {:<17} {:?}", e.time, e.seq, e.kind.as_str(), e.subjects);
        }
        commands = control.on_notifications(&batch);
        commands.retain(|c| !c.is_end_of_round());
    }
    println!("quiescent at t={}", kernel.clock());
}
