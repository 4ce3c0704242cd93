use std::collections::VecDeque;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::control::{
    ControlCommand, ControlDirective, ControlEndpoint, LatencyMode, ProductOrder, ReferenceControl,
};
use crate::event::{SimEvent, Tick};
use crate::il::{open_session, IlError, Loopback, Payload, Role, Session, SessionConfig, SessionLog, StreamTag, TapRecord, Transport};
use crate::kernel::Kernel;
use crate::kpi::{recompute_from_log, KpiEngine, KpiReport, OrderMeta, RunHeader, TaggedRecord};
use crate::model::ShopModel;
use crate::scenario::{BoundAction, Firing, Scenario, ScenarioManager};

use super::{HarnessError, DEFAULT_TICK_CAP};

/// Rounds allowed at a single tick before the run counts as livelocked.
const MAX_ROUNDS_PER_TICK: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    Invalid,
    Aborted,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub tick_cap: Tick,
    /// Feed the streaming KPI engine from taps. Without taps the report is
    /// recomputed from the session log.
    pub taps: bool,
    pub latency: LatencyMode,
    pub timeout: Option<Duration>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            tick_cap: DEFAULT_TICK_CAP,
            taps: true,
            latency: LatencyMode::Off,
            timeout: Some(Duration::from_secs(10)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunRecord {
    pub suite: String,
    pub scenario: String,
    pub seed: u64,
    pub status: RunStatus,
    pub reason: Option<String>,
    /// Paths relative to the output directory, once written.
    pub session_log: String,
    pub report: String,
    /// Measured, never written to artifacts.
    pub wall: Duration,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub report: KpiReport,
    pub log: SessionLog,
    /// Every event the emulation emitted, in order.
    pub events: Vec<SimEvent>,
}

/// Directory-safe run id.
pub(crate) fn run_id(scenario: &str, seed: u64) -> String {
    let clean: String = scenario
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{clean}-s{seed}")
}

enum Stop {
    Completed,
    Aborted(String),
}

struct Driver<'a> {
    kernel: Kernel,
    session: Session,
    manager: Option<ScenarioManager>,
    kpi: Option<KpiEngine>,
    options: &'a RunOptions,
    events: Vec<SimEvent>,
}

/// Runs one scenario (or none: `scenario = None` runs without a scenario
/// manager attached) against the reference control over an in-process
/// session.
pub fn run_scenario(
    suite: &str,
    model: &ShopModel,
    orders: &[ProductOrder],
    scenario: Option<&Scenario>,
    seed: u64,
    options: &RunOptions,
) -> Result<RunOutcome, HarnessError> {
    let control = ReferenceControl::initialize(model, orders, options.latency).map_err(|e| {
        HarnessError::Suite(format!("control rejected the order book: {e}"))
    })?;
    let endpoint = ControlEndpoint::new(control, model.hash());
    run_with_transport(suite, model, orders, scenario, seed, options, Box::new(Loopback::new(endpoint)))
}

/// Like [`run_scenario`], against whatever control sits behind `transport`.
pub fn run_with_transport(
    suite: &str,
    model: &ShopModel,
    orders: &[ProductOrder],
    scenario: Option<&Scenario>,
    seed: u64,
    options: &RunOptions,
    transport: Box<dyn Transport>,
) -> Result<RunOutcome, HarnessError> {
    let started = Instant::now();
    let scenario_id = scenario.map_or("none", |s| s.id.as_str()).to_string();
    let id = run_id(&scenario_id, seed);
    let run_error = |message: String| HarnessError::Run {
        run: id.clone(),
        message,
    };
    let header = RunHeader {
        run_id: id.clone(),
        scenario: scenario_id.clone(),
        seed,
        orders: orders.iter().map(OrderMeta::from).collect(),
    };
    let mut config = SessionConfig::new(Role::Emulation, model.hash(), id.clone());
    config.timeout = options.timeout;
    let mut session = open_session(config, transport).map_err(|e| run_error(e.to_string()))?;
    session.record(Role::Harness, 0, 0, Payload::RunOpen { header: header.clone() });

    let mut kernel = Kernel::new(model.clone());
    for order in orders {
        kernel
            .schedule_release(&order.id, order.release)
            .map_err(|e| run_error(e.to_string()))?;
    }
    let mut driver = Driver {
        kernel,
        session,
        manager: scenario.map(|s| ScenarioManager::new(s.clone(), seed)),
        kpi: options.taps.then(|| KpiEngine::new(model, header)),
        options,
        events: Vec::new(),
    };

    let (status, reason) = match driver.drive() {
        Ok(Stop::Completed) => (RunStatus::Ok, None),
        Ok(Stop::Aborted(reason)) => (RunStatus::Aborted, Some(reason)),
        Err(e) => (RunStatus::Invalid, Some(e)),
    };
    let status_text = match (&status, &reason) {
        (RunStatus::Ok, _) => "completed".to_string(),
        (RunStatus::Aborted, Some(r)) => format!("aborted: {r}"),
        (_, r) => format!("invalid: {}", r.clone().unwrap_or_default()),
    };
    let clock = driver.kernel.clock();
    let round = driver.session.round();
    driver.session.record(
        Role::Harness,
        round,
        clock,
        Payload::RunClose {
            status: status_text.clone(),
            clock,
        },
    );
    let log = if status == RunStatus::Invalid {
        driver.session.into_log()
    } else {
        driver.session.close(clock).map_err(|e| run_error(e.to_string()))?
    };

    let mut report = match driver.kpi {
        Some(mut engine) => {
            if status != RunStatus::Ok {
                engine.invalidate(status_text.clone());
            }
            engine.close(&status_text);
            engine.finalize().map_err(|e| run_error(e.to_string()))?
        }
        None => recompute_from_log(model, &log.text()).map_err(|e| run_error(e.to_string()))?,
    };
    let (mut status, mut reason) = (status, reason);
    if status == RunStatus::Ok {
        if let Some(violation) = conservation_violation(&report) {
            status = RunStatus::Invalid;
            reason = Some(violation.clone());
            report.valid = false;
            report.invalid_reason = Some(violation);
        }
    }
    let wall = started.elapsed();
    log::info!("run {id}: {status_text} at t={clock} in {wall:?}");
    Ok(RunOutcome {
        record: RunRecord {
            suite: suite.to_string(),
            scenario: scenario_id,
            seed,
            status,
            reason,
            session_log: format!("runs/{id}/session.log"),
            report: format!("runs/{id}/report.json"),
            wall,
        },
        report,
        log,
        events: driver.events,
    })
}

fn conservation_violation(report: &KpiReport) -> Option<String> {
    let count = |name: &str| report.get(name).map_or(0, |m| m.as_f64() as i64);
    let finished = count("completed") + count("cancelled") + count("scrapped");
    let released = count("released");
    (finished != released).then(|| {
        format!("conservation violated: {finished} orders finished, {released} released")
    })
}

impl Driver<'_> {
    fn drive(&mut self) -> Result<Stop, String> {
        let mut commands: Vec<ControlCommand> = Vec::new();
        let mut tick_rounds = (0, 0u64);
        loop {
            let wake = self.manager.as_ref().and_then(ScenarioManager::next_wakeup);
            let mut batch = self
                .kernel
                .advance_until(&commands, wake)
                .map_err(|e| format!("emulation refused a command: {e}"))?;
            commands.clear();
            let now = self.kernel.clock();
            if now > self.options.tick_cap {
                return Ok(Stop::Aborted(format!("tick cap {} exceeded", self.options.tick_cap)));
            }

            let directives = self.run_scenario_manager(now, wake, &mut batch)?;
            if batch.is_empty() && directives.is_empty() {
                if self.kernel.is_idle() && wake.is_none() {
                    let live = self.kernel.live_orders();
                    if live.is_empty() {
                        break;
                    }
                    return Ok(Stop::Aborted(format!(
                        "stalled at t={now} with live orders {}",
                        live.join(", ")
                    )));
                }
                continue;
            }

            tick_rounds = if tick_rounds.0 == now { (now, tick_rounds.1 + 1) } else { (now, 1) };
            if tick_rounds.1 > MAX_ROUNDS_PER_TICK {
                return Ok(Stop::Aborted(format!("livelock: no progress past t={now}")));
            }
            commands = self.exchange(now, &directives, &batch).map_err(|e| e.to_string())?;
            self.events.extend(batch);
        }
        let now = self.kernel.clock();
        let metrics = self.session.request_kpi(now).map_err(|e| e.to_string())?;
        let round = self.session.round();
        self.tap(StreamTag::Flow7, round, now, 0, TapRecord::Points(metrics))?;
        Ok(Stop::Completed)
    }

    /// Lets the scenario manager see the batch (and the clock) and applies
    /// its firings. Injected events join the batch; directives are returned
    /// for delivery ahead of the notification.
    fn run_scenario_manager(
        &mut self,
        now: Tick,
        wake: Option<Tick>,
        batch: &mut Vec<SimEvent>,
    ) -> Result<Vec<ControlDirective>, String> {
        let Some(manager) = self.manager.as_mut() else {
            return Ok(Vec::new());
        };
        let mut queue: VecDeque<Firing> = VecDeque::new();
        if wake.is_some_and(|w| w <= now) {
            queue.extend(manager.on_time(now));
        }
        let mut directives = Vec::new();
        let mut next = 0;
        loop {
            while let Some(firing) = queue.pop_front() {
                if firing.time != now {
                    return Err(format!(
                        "rule {} fired for t={} while the clock is at {now}",
                        firing.rule, firing.time
                    ));
                }
                match firing.action {
                    BoundAction::Inject(injection) => {
                        self.session.record(
                            Role::ScenarioManager,
                            self.session.round() + 1,
                            now,
                            Payload::Inject {
                                rule: firing.rule,
                                injection: injection.clone(),
                            },
                        );
                        match self.kernel.apply_injection(&injection) {
                            Ok(events) => batch.extend(events),
                            Err(e) => log::warn!("t={now}: injection skipped: {e}"),
                        }
                    }
                    BoundAction::Direct(directive) => {
                        if let ControlDirective::InsertOrder { order } = &directive {
                            if let Err(e) = self.kernel.schedule_release(&order.id, order.release) {
                                log::warn!("t={now}: order insertion skipped: {e}");
                            }
                            if let Some(kpi) = self.kpi.as_mut() {
                                kpi.register_order(&OrderMeta::from(order));
                            }
                        }
                        directives.push(directive);
                    }
                }
            }
            let Some(event) = batch.get(next) else {
                break;
            };
            next += 1;
            let manager = self.manager.as_mut().expect("checked above");
            queue.extend(manager.on_event(event));
        }
        Ok(directives)
    }

    fn exchange(
        &mut self,
        now: Tick,
        directives: &[ControlDirective],
        batch: &[SimEvent],
    ) -> Result<Vec<ControlCommand>, IlError> {
        for directive in directives {
            let ack = self.session.send_directive(now, directive)?;
            if !ack.ok {
                log::warn!(
                    "t={now}: control rejected {}: {}",
                    directive.kind_str(),
                    ack.error.unwrap_or_default()
                );
            }
        }
        let round = self.session.round() + 1;
        for event in batch {
            self.tap(StreamTag::Flow1, round, now, event.seq, TapRecord::Event(event.clone()))
                .map_err(IlError::ProtocolViolation)?;
        }
        let reply = self.session.exchange_round(now, batch)?;
        self.tap(StreamTag::Flow2, round, now, round, TapRecord::Points(reply.data))
            .map_err(IlError::ProtocolViolation)?;
        Ok(reply.commands)
    }

    /// Copies a record to the KPI engine (and into the log) when taps are on.
    fn tap(&mut self, tag: StreamTag, round: u64, t: Tick, seq: u64, record: TapRecord) -> Result<(), String> {
        let Some(kpi) = self.kpi.as_mut() else {
            return Ok(());
        };
        self.session.record(
            Role::Kpi,
            round,
            t,
            Payload::Tap {
                tag,
                seq,
                record: record.clone(),
            },
        );
        kpi.ingest(TaggedRecord { tag, t, seq, record })
            .map_err(|e| e.to_string())
    }
}
