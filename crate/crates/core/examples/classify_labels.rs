//! Lists the scenario label registry by category and classifies the labels
//! given on the command line.

use holobench::scenario::{classify, Category, Registry};

fn main() {
    let registry = Registry::builtin();
    for category in Category::ALL {
        println!("{category}: {}", registry.members(category).join(", "));
    }
    for label in std::env::args().skip(1) {
        match classify(&label) {
            Ok(category) => println!("{label} -> {category}"),
            Err(e) => println!("{label}: {e}"),
        }
    }
}
