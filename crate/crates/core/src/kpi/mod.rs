//! Externalized KPI engine. It sees the run only through tapped records:
//! emulation events (FLOW1), control data (FLOW2) and the control's own
//! KPI export (FLOW7). Everything it reports can be recomputed from a
//! session log alone, see [`recompute_from_log`].

mod recompute;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::control::{DataPoint, ProductOrder};
use crate::event::{EventKind, SimEvent, Tick};
use crate::il::{StreamTag, TapRecord};
use crate::model::ShopModel;

pub use recompute::recompute_from_log;

/// Identifies a run and carries the order book facts the engine needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunHeader {
    pub run_id: String,
    pub scenario: String,
    pub seed: u64,
    pub orders: Vec<OrderMeta>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderMeta {
    pub id: String,
    pub release: Tick,
    pub due: Tick,
}

impl From<&ProductOrder> for OrderMeta {
    fn from(o: &ProductOrder) -> Self {
        OrderMeta {
            id: o.id.clone(),
            release: o.release,
            due: o.due,
        }
    }
}

/// A record as delivered by a tap. `(tag, t, seq)` identifies it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedRecord {
    pub tag: StreamTag,
    pub t: Tick,
    pub seq: u64,
    pub record: TapRecord,
}

impl TaggedRecord {
    pub fn event(e: &SimEvent) -> Self {
        TaggedRecord {
            tag: StreamTag::Flow1,
            t: e.time,
            seq: e.seq,
            record: TapRecord::Event(e.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KpiError {
    #[error("{0:?} is not a KPI tap")]
    NotATap(StreamTag),
    #[error("unknown measure `{0}`")]
    UnknownMeasure(String),
    #[error("unmatched interval: {what} on {machine} at t={t}")]
    UnmatchedInterval {
        what: String,
        machine: String,
        t: Tick,
    },
    #[error("conservation violated: {0}")]
    Conservation(String),
    #[error("incomplete log: {0}")]
    IncompleteLog(String),
    #[error("unreadable log: {0}")]
    Parse(String),
}

/// Measures every report contains, besides the per-machine and control ones.
pub const MEASURES: [&str; 14] = [
    "makespan",
    "throughput",
    "mean_lead_time",
    "max_lead_time",
    "total_tardiness",
    "mean_tardiness",
    "mean_utilization",
    "released",
    "completed",
    "cancelled",
    "scrapped",
    "reworked",
    "commands_rejected",
    "duplicates_ignored",
];

/// Per-machine and per-order measures, reported as `<prefix><id>`.
pub const ENTITY_MEASURES: [&str; 4] = ["utilization_", "downtime_", "blocked_", "lead_time_"];

/// Checks that `name` is something a report can contain.
pub fn check_measure(name: &str) -> Result<(), KpiError> {
    let known = MEASURES.contains(&name)
        || ENTITY_MEASURES.iter().any(|p| name.starts_with(p))
        || name.starts_with("control.");
    if known {
        Ok(())
    } else {
        Err(KpiError::UnknownMeasure(name.to_string()))
    }
}

/// A measure value: counts and times stay integers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Measure {
    Int(i64),
    Real(f64),
}

impl Measure {
    pub fn as_f64(self) -> f64 {
        match self {
            Measure::Int(v) => v as f64,
            Measure::Real(v) => v,
        }
    }
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Measure::Int(v) => write!(f, "{v}"),
            Measure::Real(v) => write!(f, "{v:.6}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub run_id: String,
    pub scenario: String,
    pub seed: u64,
    /// `completed`, or `aborted: <reason>`.
    pub status: String,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invalid_reason: Option<String>,
    pub measures: BTreeMap<String, Measure>,
}

impl KpiReport {
    pub fn get(&self, name: &str) -> Option<Measure> {
        self.measures.get(name).copied()
    }

    pub fn to_json(&self) -> String {
        crate::canonical::to_canonical_pretty(self)
    }
}

#[derive(Debug, Clone, Default)]
struct Intervals {
    open: BTreeMap<String, Tick>,
    closed: BTreeMap<String, Vec<(Tick, Tick)>>,
}

impl Intervals {
    fn open(&mut self, machine: &str, t: Tick) -> bool {
        self.open.insert(machine.to_string(), t).is_none()
    }

    fn close(&mut self, machine: &str, t: Tick) -> bool {
        match self.open.remove(machine) {
            Some(start) => {
                self.closed.entry(machine.to_string()).or_default().push((start, t));
                true
            }
            None => false,
        }
    }

    /// Total length on `machine`, clipped to `[0, horizon]`; intervals still
    /// open run to the horizon.
    fn total(&self, machine: &str, horizon: Tick) -> Tick {
        let closed = self.closed.get(machine).into_iter().flatten().copied();
        let open = self.open.get(machine).map(|&s| (s, horizon));
        closed
            .chain(open)
            .map(|(s, e)| e.min(horizon).saturating_sub(s.min(horizon)))
            .sum()
    }
}

#[derive(Debug, Clone, Default)]
struct Aggregate {
    count: i64,
    sum: i64,
    max: i64,
}

#[derive(Debug, Clone)]
pub struct KpiEngine {
    header: RunHeader,
    machines: Vec<String>,
    due: BTreeMap<String, Tick>,
    seen: BTreeSet<(StreamTag, Tick, u64)>,
    duplicates: i64,
    last_t: BTreeMap<StreamTag, Tick>,
    invalid: Option<String>,
    closed: Option<String>,
    released: BTreeMap<String, Tick>,
    completed: BTreeMap<String, Tick>,
    cancelled: BTreeMap<String, Tick>,
    scrapped: BTreeMap<String, Tick>,
    reworked: i64,
    commands_rejected: i64,
    busy: Intervals,
    down: Intervals,
    blocked: Intervals,
    control_data: BTreeMap<String, Aggregate>,
    control_kpi: BTreeMap<String, i64>,
}

impl KpiEngine {
    pub fn new(model: &ShopModel, header: RunHeader) -> Self {
        let due = header.orders.iter().map(|o| (o.id.clone(), o.due)).collect();
        KpiEngine {
            header,
            machines: model.machines.iter().map(|m| m.id.clone()).collect(),
            due,
            seen: BTreeSet::new(),
            duplicates: 0,
            last_t: BTreeMap::new(),
            invalid: None,
            closed: None,
            released: BTreeMap::new(),
            completed: BTreeMap::new(),
            cancelled: BTreeMap::new(),
            scrapped: BTreeMap::new(),
            reworked: 0,
            commands_rejected: 0,
            busy: Intervals::default(),
            down: Intervals::default(),
            blocked: Intervals::default(),
            control_data: BTreeMap::new(),
            control_kpi: BTreeMap::new(),
        }
    }

    pub fn header(&self) -> &RunHeader {
        &self.header
    }

    /// Makes a late order's due date known (order insertion).
    pub fn register_order(&mut self, meta: &OrderMeta) {
        self.due.entry(meta.id.clone()).or_insert(meta.due);
    }

    /// Flags the run as unusable for comparison.
    pub fn invalidate(&mut self, reason: impl Into<String>) {
        self.invalid.get_or_insert(reason.into());
    }

    pub fn is_valid(&self) -> bool {
        self.invalid.is_none()
    }

    pub fn duplicates(&self) -> i64 {
        self.duplicates
    }

    /// Feeds one tapped record. Duplicates are counted and dropped; a record
    /// older than one already seen invalidates the run.
    pub fn ingest(&mut self, record: TaggedRecord) -> Result<(), KpiError> {
        if !record.tag.is_kpi_tap() {
            return Err(KpiError::NotATap(record.tag));
        }
        if !self.seen.insert((record.tag, record.t, record.seq)) {
            self.duplicates += 1;
            log::debug!("duplicate {:?} record t={} seq={}", record.tag, record.t, record.seq);
            return Ok(());
        }
        let last = self.last_t.entry(record.tag).or_insert(0);
        if record.t < *last {
            let reason = format!("{:?} time regressed from {} to {}", record.tag, last, record.t);
            self.invalidate(reason);
            return Ok(());
        }
        *last = record.t;
        match (record.tag, record.record) {
            (StreamTag::Flow1, TapRecord::Event(e)) => self.apply_event(&e),
            (StreamTag::Flow2, TapRecord::Points(points)) => {
                for p in points {
                    let agg = self.control_data.entry(p.name).or_default();
                    agg.count += 1;
                    agg.sum += p.value;
                    agg.max = if agg.count == 1 { p.value } else { agg.max.max(p.value) };
                }
                Ok(())
            }
            (StreamTag::Flow7, TapRecord::Points(points)) => {
                self.control_kpi
                    .extend(points.into_iter().map(|DataPoint { name, value }| (name, value)));
                Ok(())
            }
            (tag, _) => {
                self.invalidate(format!("{tag:?} carried the wrong record type"));
                Ok(())
            }
        }
    }

    fn apply_event(&mut self, e: &SimEvent) -> Result<(), KpiError> {
        let t = e.time;
        let unmatched = |what: &str, machine: &str| KpiError::UnmatchedInterval {
            what: what.to_string(),
            machine: machine.to_string(),
            t,
        };
        let order = e.order().map(str::to_string);
        let machine = e.machine().unwrap_or_default().to_string();
        match e.kind {
            EventKind::OrderReleased => {
                if let Some(o) = order {
                    self.released.entry(o).or_insert(t);
                }
            }
            EventKind::OpStarted => {
                if !self.busy.open(&machine, t) {
                    return Err(unmatched("op-started while busy", &machine));
                }
            }
            EventKind::OpFinished => {
                if !self.busy.close(&machine, t) {
                    return Err(unmatched("op-finished without op-started", &machine));
                }
            }
            EventKind::MachineDown => {
                if order.is_some() && !self.busy.close(&machine, t) {
                    return Err(unmatched("preemption without op-started", &machine));
                }
                if !self.down.open(&machine, t) {
                    return Err(unmatched("machine-down while down", &machine));
                }
            }
            EventKind::MachineUp => {
                if !self.down.close(&machine, t) {
                    return Err(unmatched("machine-up without machine-down", &machine));
                }
            }
            EventKind::SupplyBlocked => {
                if !self.blocked.open(&machine, t) {
                    return Err(unmatched("supply-blocked while blocked", &machine));
                }
            }
            EventKind::SupplyRestored => {
                if !self.blocked.close(&machine, t) {
                    return Err(unmatched("supply-restored without supply-blocked", &machine));
                }
            }
            EventKind::ProductRejected => {
                if e.machine().is_some() && !self.busy.close(&machine, t) {
                    return Err(unmatched("reject during idle machine", &machine));
                }
                match (e.detail.as_deref(), order) {
                    (Some("scrap"), Some(o)) => {
                        self.scrapped.insert(o, t);
                    }
                    _ => self.reworked += 1,
                }
            }
            EventKind::OrderCompleted => {
                if let Some(o) = order {
                    self.completed.insert(o, t);
                }
            }
            EventKind::OrderCancelled => {
                if let Some(o) = order {
                    self.cancelled.insert(o, t);
                }
            }
            EventKind::CommandRejected => self.commands_rejected += 1,
            EventKind::ShuttleDeparted | EventKind::ShuttleArrived => {}
        }
        Ok(())
    }

    /// Orders that were released but reached no terminal state.
    pub fn unfinished(&self) -> Vec<&str> {
        self.released
            .keys()
            .filter(|o| {
                !self.completed.contains_key(*o)
                    && !self.cancelled.contains_key(*o)
                    && !self.scrapped.contains_key(*o)
            })
            .map(String::as_str)
            .collect()
    }

    /// Time of the last order completion, 0 if none.
    pub fn makespan(&self) -> Tick {
        self.completed.values().copied().max().unwrap_or(0)
    }

    /// Ends the run; `status` is `completed` or the reason it stopped.
    pub fn close(&mut self, status: &str) {
        self.closed = Some(status.to_string());
    }

    /// The run's report. The run must be closed.
    pub fn finalize(&self) -> Result<KpiReport, KpiError> {
        match &self.closed {
            Some(status) => Ok(self.report(status)),
            None => Err(KpiError::IncompleteLog("run is still open".into())),
        }
    }

    fn report(&self, status: &str) -> KpiReport {
        let makespan = self.makespan();
        let mut m: BTreeMap<String, Measure> = BTreeMap::new();
        let int = |v: i64| Measure::Int(v);
        let ratio = |num: f64, den: f64| Measure::Real(if den == 0.0 { 0.0 } else { num / den });

        let completed = self.completed.len() as i64;
        let lead: BTreeMap<&str, i64> = self
            .completed
            .iter()
            .map(|(o, &done)| {
                let release = self.released.get(o).copied().unwrap_or(0);
                (o.as_str(), done as i64 - release as i64)
            })
            .collect();
        let tardiness: i64 = self
            .completed
            .iter()
            .map(|(o, &done)| {
                let due = self.due.get(o).copied().unwrap_or(Tick::MAX);
                done.saturating_sub(due) as i64
            })
            .sum();
        m.insert("makespan".into(), int(makespan as i64));
        m.insert("throughput".into(), ratio(completed as f64 * 1000.0, makespan as f64));
        let lead_sum: i64 = lead.values().sum();
        m.insert("mean_lead_time".into(), ratio(lead_sum as f64, lead.len() as f64));
        m.insert("max_lead_time".into(), int(lead.values().copied().max().unwrap_or(0)));
        for (order, value) in &lead {
            m.insert(format!("lead_time_{order}"), int(*value));
        }
        m.insert("total_tardiness".into(), int(tardiness));
        m.insert("mean_tardiness".into(), ratio(tardiness as f64, completed as f64));
        m.insert("released".into(), int(self.released.len() as i64));
        m.insert("completed".into(), int(completed));
        m.insert("cancelled".into(), int(self.cancelled.len() as i64));
        m.insert("scrapped".into(), int(self.scrapped.len() as i64));
        m.insert("reworked".into(), int(self.reworked));
        m.insert("commands_rejected".into(), int(self.commands_rejected));
        m.insert("duplicates_ignored".into(), int(self.duplicates));

        let mut utilization_sum = 0.0;
        for machine in &self.machines {
            let busy = self.busy.total(machine, makespan);
            let util = ratio(busy as f64, makespan as f64);
            utilization_sum += util.as_f64();
            m.insert(format!("utilization_{machine}"), util);
            m.insert(format!("downtime_{machine}"), int(self.down.total(machine, makespan) as i64));
            m.insert(format!("blocked_{machine}"), int(self.blocked.total(machine, makespan) as i64));
        }
        m.insert(
            "mean_utilization".into(),
            ratio(utilization_sum, self.machines.len() as f64),
        );
        for (name, agg) in &self.control_data {
            m.insert(format!("control.{name}.count"), int(agg.count));
            m.insert(format!("control.{name}.max"), int(agg.max));
            m.insert(format!("control.{name}.mean"), ratio(agg.sum as f64, agg.count as f64));
        }
        for (name, value) in &self.control_kpi {
            m.insert(format!("control.{name}"), int(*value));
        }
        KpiReport {
            run_id: self.header.run_id.clone(),
            scenario: self.header.scenario.clone(),
            seed: self.header.seed,
            status: status.to_string(),
            valid: self.invalid.is_none(),
            invalid_reason: self.invalid.clone(),
            measures: m,
        }
    }
}

/// Flattens reports to CSV, one row per run; columns are the union of all
/// measure names.
pub fn reports_to_csv(reports: &[KpiReport]) -> String {
    let names: BTreeSet<&str> = reports
        .iter()
        .flat_map(|r| r.measures.keys().map(String::as_str))
        .collect();
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["run_id", "scenario", "seed", "status", "valid"];
    header.extend(names.iter().copied());
    writer.write_record(&header).expect("in-memory write");
    for r in reports {
        let mut row = vec![
            r.run_id.clone(),
            r.scenario.clone(),
            r.seed.to_string(),
            r.status.clone(),
            r.valid.to_string(),
        ];
        row.extend(
            names
                .iter()
                .map(|n| r.get(n).map(|m| m.to_string()).unwrap_or_default()),
        );
        writer.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 input")
}
