//! The `IL1` wire format: one message per line, `IL1 ` followed by a JSON
//! object with exactly the keys `v`, `role`, `round`, `t`, `kind`, `body`,
//! `corr`, serialized with sorted keys so equal messages give equal bytes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::control::{Acknowledgement, ControlCommand, ControlDirective, DataPoint};
use crate::event::{SimEvent, Tick};
use crate::kernel::Injection;
use crate::kpi::RunHeader;

use super::IlError;

pub const PROTOCOL_VERSION: &str = "1";
pub const WIRE_PREFIX: &str = "IL1 ";

const KEYS: [&str; 7] = ["body", "corr", "kind", "role", "round", "t", "v"];

/// Who sent a message. The first four are session roles; `harness` marks
/// run bookkeeping records in a session log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Control,
    Emulation,
    ScenarioManager,
    Kpi,
    Harness,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Control => "control",
            Role::Emulation => "emulation",
            Role::ScenarioManager => "scenario-manager",
            Role::Kpi => "kpi",
            Role::Harness => "harness",
        }
    }

    /// Parses a role that may open a session.
    pub fn parse_session_role(s: &str) -> Result<Role, IlError> {
        match s.parse::<Role>()? {
            Role::Harness => Err(IlError::UnknownRole(s.to_string())),
            role => Ok(role),
        }
    }
}

impl FromStr for Role {
    type Err = IlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Role::Control,
            Role::Emulation,
            Role::ScenarioManager,
            Role::Kpi,
            Role::Harness,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
        .ok_or_else(|| IlError::UnknownRole(s.to_string()))
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The labelled flows of the architecture. 1, 2 and 7 feed the KPI engine;
/// 3 to 6 carry directives to the control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StreamTag {
    #[serde(rename = "FLOW1")]
    Flow1,
    #[serde(rename = "FLOW2")]
    Flow2,
    #[serde(rename = "FLOW3")]
    Flow3,
    #[serde(rename = "FLOW4")]
    Flow4,
    #[serde(rename = "FLOW5")]
    Flow5,
    #[serde(rename = "FLOW6")]
    Flow6,
    #[serde(rename = "FLOW7")]
    Flow7,
}

impl StreamTag {
    /// Emulation events, control data, control KPI.
    pub fn is_kpi_tap(self) -> bool {
        matches!(self, StreamTag::Flow1 | StreamTag::Flow2 | StreamTag::Flow7)
    }

    /// Directive path for a directive kind.
    pub fn for_directive(d: &ControlDirective) -> StreamTag {
        match d {
            ControlDirective::InsertOrder { .. } => StreamTag::Flow3,
            ControlDirective::CancelOrder { .. } => StreamTag::Flow4,
            ControlDirective::SetPriority { .. } => StreamTag::Flow5,
            ControlDirective::AnnounceBreakdown { .. }
            | ControlDirective::AnnounceSupplyBlock { .. } => StreamTag::Flow6,
        }
    }
}

/// What a tap carries to the KPI engine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TapRecord {
    Event(SimEvent),
    /// One round of control data, or the control's KPI export.
    Points(Vec<DataPoint>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "kebab-case")]
pub enum Payload {
    Hello { role: Role, model_hash: String, session: String },
    HelloAck { model_hash: String, session: String },
    Error { code: String, message: String },
    /// Emulation -> control: the full batch for one round.
    Notify { events: Vec<SimEvent> },
    /// Scenario manager -> control.
    Directive { flow: StreamTag, directive: ControlDirective },
    Ack(Acknowledgement),
    /// Control -> emulation.
    Command(ControlCommand),
    EndOfRound {},
    /// Control data points for the round (FLOW2 source).
    Data { points: Vec<DataPoint> },
    /// Scenario manager -> emulation, recorded for audit.
    Inject { rule: usize, injection: Injection },
    KpiRequest {},
    /// Control KPI export (FLOW7 source).
    Kpi { metrics: Vec<DataPoint> },
    /// Copy of a record for the KPI engine.
    Tap { tag: StreamTag, seq: u64, record: TapRecord },
    RunOpen { header: RunHeader },
    RunClose { status: String, clock: Tick },
    Close {},
}

impl Payload {
    pub const KINDS: [&'static str; 16] = [
        "hello",
        "hello-ack",
        "error",
        "notify",
        "directive",
        "ack",
        "command",
        "end-of-round",
        "data",
        "inject",
        "kpi-request",
        "kpi",
        "tap",
        "run-open",
        "run-close",
        "close",
    ];

    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Hello { .. } => "hello",
            Payload::HelloAck { .. } => "hello-ack",
            Payload::Error { .. } => "error",
            Payload::Notify { .. } => "notify",
            Payload::Directive { .. } => "directive",
            Payload::Ack(_) => "ack",
            Payload::Command(_) => "command",
            Payload::EndOfRound {} => "end-of-round",
            Payload::Data { .. } => "data",
            Payload::Inject { .. } => "inject",
            Payload::KpiRequest {} => "kpi-request",
            Payload::Kpi { .. } => "kpi",
            Payload::Tap { .. } => "tap",
            Payload::RunOpen { .. } => "run-open",
            Payload::RunClose { .. } => "run-close",
            Payload::Close {} => "close",
        }
    }
}

/// Which way a message travels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// emulation -> control
    Notification,
    /// control -> emulation
    Command,
    /// scenario manager -> control
    Directive,
    /// anything -> KPI engine
    Tap,
    /// handshake, acknowledgements and run bookkeeping
    Session,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub v: String,
    pub role: Role,
    pub round: u64,
    pub t: Tick,
    pub corr: Option<String>,
    pub payload: Payload,
}

impl Message {
    pub fn new(role: Role, round: u64, t: Tick, corr: Option<String>, payload: Payload) -> Self {
        Message {
            v: PROTOCOL_VERSION.to_string(),
            role,
            round,
            t,
            corr,
            payload,
        }
    }

    pub fn kind(&self) -> &'static str {
        self.payload.kind()
    }

    pub fn direction(&self) -> Direction {
        match &self.payload {
            Payload::Notify { .. } => Direction::Notification,
            Payload::Command(_) | Payload::EndOfRound {} => Direction::Command,
            Payload::Directive { .. } => Direction::Directive,
            Payload::Tap { .. } | Payload::Data { .. } | Payload::Kpi { .. } => Direction::Tap,
            _ => Direction::Session,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("byte {offset}: unknown payload kind `{kind}`")]
    UnknownKind { offset: usize, kind: String },
    #[error("byte {offset}: {message}")]
    Schema { offset: usize, message: String },
}

impl DecodeError {
    pub fn offset(&self) -> usize {
        match self {
            DecodeError::Syntax { offset, .. }
            | DecodeError::UnknownKind { offset, .. }
            | DecodeError::Schema { offset, .. } => *offset,
        }
    }
}

/// Encodes one message as a complete wire line, newline included.
pub fn encode(msg: &Message) -> String {
    let mut object = match serde_json::to_value(&msg.payload).expect("payload serializes") {
        Value::Object(map) => map,
        _ => unreachable!("adjacently tagged payload is an object"),
    };
    object.insert("v".into(), Value::String(msg.v.clone()));
    object.insert("role".into(), Value::String(msg.role.as_str().into()));
    object.insert("round".into(), Value::from(msg.round));
    object.insert("t".into(), Value::from(msg.t));
    object.insert(
        "corr".into(),
        msg.corr.clone().map(Value::String).unwrap_or(Value::Null),
    );
    let mut line = String::from(WIRE_PREFIX);
    line.push_str(&Value::Object(object).to_string());
    line.push('\n');
    line
}

/// Decodes one wire line (a trailing newline is optional).
pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
    let text = std::str::from_utf8(bytes).map_err(|e| DecodeError::Syntax {
        offset: e.valid_up_to(),
        message: "invalid UTF-8".into(),
    })?;
    let text = text.strip_suffix('\n').unwrap_or(text);
    let Some(json) = text.strip_prefix(WIRE_PREFIX) else {
        let offset = text
            .bytes()
            .zip(WIRE_PREFIX.bytes())
            .take_while(|(a, b)| a == b)
            .count();
        return Err(DecodeError::Syntax {
            offset,
            message: format!("expected `{}` prefix", WIRE_PREFIX.trim_end()),
        });
    };
    let base = WIRE_PREFIX.len();
    let value: Value = serde_json::from_str(json).map_err(|e| DecodeError::Syntax {
        // serde_json columns are 1-based; lines other than the first cannot
        // occur in a single-line record.
        offset: base + e.column().saturating_sub(1),
        message: e.to_string(),
    })?;
    let schema = |message: String| DecodeError::Schema {
        offset: base,
        message,
    };
    let Value::Object(mut object) = value else {
        return Err(schema("record is not a JSON object".into()));
    };
    for key in KEYS {
        if !object.contains_key(key) {
            return Err(schema(format!("missing key `{key}`")));
        }
    }
    if let Some(extra) = object.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(schema(format!("unexpected key `{extra}`")));
    }
    let kind = match object.get("kind") {
        Some(Value::String(k)) => k.clone(),
        _ => return Err(schema("`kind` must be a string".into())),
    };
    if !Payload::KINDS.contains(&kind.as_str()) {
        let offset = text.rfind(&format!("\"{kind}\"")).unwrap_or(base);
        return Err(DecodeError::UnknownKind { offset, kind });
    }
    let v = take_string(&mut object, "v").map_err(schema)?;
    let role = take_string(&mut object, "role")
        .map_err(schema)?
        .parse::<Role>()
        .map_err(|e| schema(e.to_string()))?;
    let round = take_u64(&mut object, "round").map_err(schema)?;
    let t = take_u64(&mut object, "t").map_err(schema)?;
    let corr = match object.remove("corr") {
        Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s),
        _ => return Err(schema("`corr` must be a string or null".into())),
    };
    let mut tagged = Map::new();
    tagged.insert("kind".into(), Value::String(kind.clone()));
    tagged.insert("body".into(), object.remove("body").unwrap_or(Value::Null));
    let payload: Payload = serde_json::from_value(Value::Object(tagged))
        .map_err(|e| schema(format!("bad `{kind}` body: {e}")))?;
    Ok(Message {
        v,
        role,
        round,
        t,
        corr,
        payload,
    })
}

fn take_string(object: &mut Map<String, Value>, key: &str) -> Result<String, String> {
    match object.remove(key) {
        Some(Value::String(s)) => Ok(s),
        _ => Err(format!("`{key}` must be a string")),
    }
}

fn take_u64(object: &mut Map<String, Value>, key: &str) -> Result<u64, String> {
    object
        .remove(key)
        .and_then(|v| v.as_u64())
        .ok_or_else(|| format!("`{key}` must be a non-negative integer"))
}
