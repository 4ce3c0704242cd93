//! A deterministic benchmarking harness for holonic manufacturing control.
//!
//! The crate couples four parts that talk only through messages:
//!
//! * [`kernel`]: a lean discrete-event emulation of the shop floor. It owns the
//!   simulation clock and emits the production event stream.
//! * [`il`]: the interface layer. A line-oriented wire protocol (`IL1`) and a
//!   lock-step round protocol that lets a control system drive the emulation
//!   the same way it would drive real equipment, plus a replay backend.
//! * [`scenario`]: declarative disturbance scenarios. The scenario manager
//!   watches events, fires injections into the emulation and directives into
//!   the control, and owns every random stream.
//! * [`kpi`]: the external KPI engine fed by passive taps.
//!
//! [`control`] holds a small deterministic reference control (the benchmark
//! subject) and [`harness`] orchestrates complete suites and writes artifacts.

pub mod canonical;
pub mod control;
pub mod event;
pub mod fixtures;
pub mod harness;
pub mod il;
pub mod kernel;
pub mod kpi;
pub mod model;
pub mod scenario;

pub use event::{EventKind, SimEvent, Subjects, Tick};
pub use model::{load_model, ShopModel};
