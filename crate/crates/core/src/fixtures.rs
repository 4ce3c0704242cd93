//! The shipped MiniCell bench: two machines, four nodes, two shuttles.
//!
//! Every scenario runs against the same model bytes.

pub const MINICELL_MODEL: &str = include_str!("../data/minicell/model.json");
pub const MINICELL_ORDERS: &str = include_str!("../data/minicell/orders.json");
pub const MINICELL_SUITE: &str = include_str!("../data/minicell/suite.json");

pub const SCENARIO_NULL: &str = include_str!("../data/minicell/scenarios/null.json");
pub const SCENARIO_PS9: &str = include_str!("../data/minicell/scenarios/ps9.json");
pub const SCENARIO_RUSH_ORDER: &str = include_str!("../data/minicell/scenarios/rush-order.json");
pub const SCENARIO_REJECT_REWORK: &str =
    include_str!("../data/minicell/scenarios/reject-rework.json");
pub const SCENARIO_SUPPLY_SHORTAGE: &str =
    include_str!("../data/minicell/scenarios/supply-shortage.json");

/// Shipped scenario documents in suite order.
pub const MINICELL_SCENARIOS: [(&str, &str); 5] = [
    ("null", SCENARIO_NULL),
    ("PS9", SCENARIO_PS9),
    ("rush-order", SCENARIO_RUSH_ORDER),
    ("reject-rework", SCENARIO_REJECT_REWORK),
    ("supply-shortage", SCENARIO_SUPPLY_SHORTAGE),
];

/// Directory holding the shipped MiniCell documents.
pub fn minicell_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/minicell")
}
