use std::time::Duration;

use crate::canonical::sha256_hex;
use crate::control::{Acknowledgement, ControlCommand, ControlDirective, DataPoint};
use crate::event::{SimEvent, Tick};

use super::message::{decode, encode, Message, Payload, Role, StreamTag, PROTOCOL_VERSION};
use super::transport::Transport;
use super::IlError;

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub role: Role,
    pub version: String,
    pub model_hash: String,
    pub session_id: String,
    pub timeout: Option<Duration>,
}

impl SessionConfig {
    pub fn new(role: Role, model_hash: impl Into<String>, session_id: impl Into<String>) -> Self {
        SessionConfig {
            role,
            version: PROTOCOL_VERSION.to_string(),
            model_hash: model_hash.into(),
            session_id: session_id.into(),
            timeout: Some(Duration::from_secs(10)),
        }
    }
}

/// Every line that crossed a session, in order, plus the bookkeeping
/// records written next to them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionLog {
    lines: Vec<String>,
}

impl SessionLog {
    pub fn push(&mut self, line: impl Into<String>) {
        let mut line = line.into();
        if !line.ends_with('\n') {
            line.push('\n');
        }
        self.lines.push(line);
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn text(&self) -> String {
        self.lines.concat()
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.text())
    }
}

/// What the control answered in one round.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundReply {
    /// Commands in arrival order, without the end-of-round token.
    pub commands: Vec<ControlCommand>,
    pub data: Vec<DataPoint>,
}

/// The emulation's end of a session with the control.
pub struct Session {
    config: SessionConfig,
    transport: Box<dyn Transport>,
    log: SessionLog,
    round: u64,
    directives_in_round: u64,
}

/// Opens a session and performs the hello handshake: protocol version and
/// model hash must agree on both sides.
pub fn open_session(config: SessionConfig, transport: Box<dyn Transport>) -> Result<Session, IlError> {
    let mut session = Session::attach(config, transport);
    session.handshake()?;
    Ok(session)
}

impl Session {
    /// Wraps a transport without handshaking.
    pub(crate) fn attach(config: SessionConfig, transport: Box<dyn Transport>) -> Self {
        Session {
            config,
            transport,
            log: SessionLog::default(),
            round: 0,
            directives_in_round: 0,
        }
    }

    fn handshake(&mut self) -> Result<(), IlError> {
        let hello = Payload::Hello {
            role: self.config.role,
            model_hash: self.config.model_hash.clone(),
            session: self.config.session_id.clone(),
        };
        let mut msg = Message::new(self.config.role, 0, 0, None, hello);
        msg.v = self.config.version.clone();
        self.send(&msg)?;
        let reply = self.recv()?.ok_or(IlError::Closed)?;
        self.check_hello_reply(reply)
    }

    pub(crate) fn check_hello_reply(&self, reply: Message) -> Result<(), IlError> {
        if reply.v != self.config.version {
            return Err(IlError::VersionMismatch {
                ours: self.config.version.clone(),
                theirs: reply.v,
            });
        }
        match reply.payload {
            Payload::HelloAck { model_hash, .. } if model_hash == self.config.model_hash => Ok(()),
            Payload::HelloAck { model_hash, .. } => Err(IlError::ModelMismatch {
                ours: self.config.model_hash.clone(),
                theirs: model_hash,
            }),
            Payload::Error { code, message } if code == "model-mismatch" => {
                Err(IlError::ModelMismatch {
                    ours: self.config.model_hash.clone(),
                    theirs: message,
                })
            }
            Payload::Error { code, message } => Err(IlError::Peer { code, message }),
            other => Err(IlError::ProtocolViolation(format!(
                "expected hello-ack, got {}",
                other.kind()
            ))),
        }
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub(crate) fn set_round(&mut self, round: u64) {
        self.round = round;
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub(crate) fn send(&mut self, msg: &Message) -> Result<(), IlError> {
        self.send_line(&encode(msg))
    }

    pub(crate) fn send_line(&mut self, line: &str) -> Result<(), IlError> {
        self.log.push(line);
        self.transport.send(line)
    }

    pub(crate) fn recv(&mut self) -> Result<Option<Message>, IlError> {
        let Some(line) = self.transport.recv(self.config.timeout)? else {
            return Ok(None);
        };
        self.log.push(line.as_str());
        Ok(Some(decode(line.as_bytes())?))
    }

    /// Appends a bookkeeping record (tap, injection, run header) to the log
    /// without sending it.
    pub fn record(&mut self, role: Role, round: u64, t: Tick, payload: Payload) {
        self.log.push(encode(&Message::new(role, round, t, None, payload)));
    }

    /// Delivers a directive ahead of the next round's notification.
    pub fn send_directive(
        &mut self,
        t: Tick,
        directive: &ControlDirective,
    ) -> Result<Acknowledgement, IlError> {
        let round = self.round + 1;
        let corr = format!("d{round}.{}", self.directives_in_round);
        self.directives_in_round += 1;
        let payload = Payload::Directive {
            flow: StreamTag::for_directive(directive),
            directive: directive.clone(),
        };
        self.send(&Message::new(Role::ScenarioManager, round, t, Some(corr.clone()), payload))?;
        self.expect_ack(&corr)
    }

    pub(crate) fn expect_ack(&mut self, corr: &str) -> Result<Acknowledgement, IlError> {
        let reply = self.recv()?.ok_or(IlError::Closed)?;
        match reply.payload {
            Payload::Ack(ack) if reply.corr.as_deref() == Some(corr) => Ok(ack),
            Payload::Error { code, message } => Err(IlError::Peer { code, message }),
            other => Err(IlError::ProtocolViolation(format!(
                "expected ack for {corr}, got {}",
                other.kind()
            ))),
        }
    }

    /// Sends the round's notification batch and collects the control's
    /// answer up to its end-of-round token.
    pub fn exchange_round(&mut self, t: Tick, events: &[SimEvent]) -> Result<RoundReply, IlError> {
        self.round += 1;
        self.directives_in_round = 0;
        let corr = format!("n{}", self.round);
        let notify = Payload::Notify {
            events: events.to_vec(),
        };
        self.send(&Message::new(Role::Emulation, self.round, t, Some(corr.clone()), notify))?;
        self.collect_round(self.round, &corr)
    }

    pub(crate) fn collect_round(&mut self, round: u64, corr: &str) -> Result<RoundReply, IlError> {
        let mut reply = RoundReply::default();
        let mut received = 0usize;
        loop {
            let msg = match self.recv() {
                Ok(Some(msg)) => msg,
                Ok(None) => {
                    return Err(IlError::ProtocolViolation(format!(
                        "peer closed round {round} without end-of-round"
                    )))
                }
                Err(IlError::Timeout(d)) if received > 0 => {
                    return Err(IlError::ProtocolViolation(format!(
                        "no end-of-round for round {round} within {d:?}"
                    )))
                }
                Err(IlError::Decode(e)) => return Err(IlError::MalformedCommand(e.to_string())),
                Err(e) => return Err(e),
            };
            received += 1;
            if msg.round != round || msg.corr.as_deref() != Some(corr) {
                return Err(IlError::ProtocolViolation(format!(
                    "{} for round {} ({:?}) while in round {round}",
                    msg.kind(),
                    msg.round,
                    msg.corr
                )));
            }
            match msg.payload {
                Payload::Command(command) if command.is_end_of_round() => return Ok(reply),
                Payload::EndOfRound {} => return Ok(reply),
                Payload::Command(command) => reply.commands.push(command),
                Payload::Data { points } => reply.data.extend(points),
                Payload::Error { code, message } => return Err(IlError::Peer { code, message }),
                other => {
                    return Err(IlError::ProtocolViolation(format!(
                        "unexpected {} during round {round}",
                        other.kind()
                    )))
                }
            }
        }
    }

    /// Asks the control for its own measures.
    pub fn request_kpi(&mut self, t: Tick) -> Result<Vec<DataPoint>, IlError> {
        let corr = format!("k{}", self.round);
        self.send(&Message::new(
            Role::Kpi,
            self.round,
            t,
            Some(corr.clone()),
            Payload::KpiRequest {},
        ))?;
        self.expect_kpi(&corr)
    }

    pub(crate) fn expect_kpi(&mut self, corr: &str) -> Result<Vec<DataPoint>, IlError> {
        let reply = self.recv()?.ok_or(IlError::Closed)?;
        match reply.payload {
            Payload::Kpi { metrics } if reply.corr.as_deref() == Some(corr) => Ok(metrics),
            Payload::Error { code, message } => Err(IlError::Peer { code, message }),
            other => Err(IlError::ProtocolViolation(format!(
                "expected kpi, got {}",
                other.kind()
            ))),
        }
    }

    /// Says goodbye and hands back the log.
    pub fn close(mut self, t: Tick) -> Result<SessionLog, IlError> {
        self.send(&Message::new(Role::Emulation, self.round, t, None, Payload::Close {}))?;
        Ok(self.log)
    }

    /// Hands back the log without notifying the peer (after a failure).
    pub fn into_log(self) -> SessionLog {
        self.log
    }
}
