use super::message::{decode, Message, Payload, Role};
use super::session::{Session, SessionConfig, SessionLog};
use super::transport::Transport;
use super::IlError;

/// Plays the emulation side of a recorded session against a control,
/// resending the recorded lines byte for byte.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    hello: Option<String>,
    steps: Vec<(Message, String)>,
}

/// Builds a replay backend from a session log. The log must be complete:
/// rounds never decrease and every notification is answered by an
/// end-of-round.
pub fn replay_backend(log: &str) -> Result<ReplayBackend, IlError> {
    let mut backend = ReplayBackend::default();
    let mut last_round = 0u64;
    let mut open_round: Option<u64> = None;
    for (index, line) in log.split_inclusive('\n').enumerate() {
        let number = index + 1;
        if !line.ends_with('\n') {
            return Err(IlError::Replay(format!("log truncated: line {number} is incomplete")));
        }
        let msg = decode(line.as_bytes())
            .map_err(|e| IlError::Replay(format!("line {number}: {e}")))?;
        if msg.round < last_round {
            return Err(IlError::Replay(format!(
                "line {number}: round {} after round {last_round}",
                msg.round
            )));
        }
        last_round = msg.round;
        let from_control = msg.role == Role::Control;
        match &msg.payload {
            Payload::Hello { .. } if !from_control => backend.hello = Some(line.to_string()),
            Payload::Notify { .. } => {
                if let Some(open) = open_round {
                    return Err(IlError::Replay(format!(
                        "log truncated mid-round {open}: no end-of-round"
                    )));
                }
                open_round = Some(msg.round);
                backend.steps.push((msg, line.to_string()));
            }
            Payload::Directive { .. } | Payload::KpiRequest {} if !from_control => {
                backend.steps.push((msg, line.to_string()));
            }
            Payload::EndOfRound {} => open_round = None,
            Payload::Command(c) if c.is_end_of_round() => open_round = None,
            _ => {}
        }
    }
    if let Some(open) = open_round {
        return Err(IlError::Replay(format!(
            "log truncated mid-round {open}: no end-of-round"
        )));
    }
    Ok(backend)
}

impl ReplayBackend {
    pub fn rounds(&self) -> usize {
        self.steps
            .iter()
            .filter(|(m, _)| matches!(m.payload, Payload::Notify { .. }))
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.hello.is_none() && self.steps.is_empty()
    }

    /// Replays against the control behind `transport`; returns the new log.
    /// An empty recording closes at once without touching the transport.
    pub fn run(&self, config: SessionConfig, transport: Box<dyn Transport>) -> Result<SessionLog, IlError> {
        if self.is_empty() {
            return Ok(SessionLog::default());
        }
        let mut session = Session::attach(config, transport);
        if let Some(hello) = &self.hello {
            session.send_line(hello)?;
            let reply = session.recv()?.ok_or(IlError::Closed)?;
            session.check_hello_reply(reply)?;
        }
        let (mut last_round, mut last_t) = (0, 0);
        for (msg, line) in &self.steps {
            session.send_line(line)?;
            let corr = msg.corr.clone().unwrap_or_default();
            match msg.payload {
                Payload::Notify { .. } => {
                    session.collect_round(msg.round, &corr)?;
                }
                Payload::Directive { .. } => {
                    session.expect_ack(&corr)?;
                }
                _ => {
                    session.expect_kpi(&corr)?;
                }
            }
            (last_round, last_t) = (msg.round, msg.t);
        }
        session.set_round(last_round);
        session.close(last_t)
    }
}

/// The control's side of a log: its commands and end-of-round tokens, in
/// order. Two runs made the same decisions iff these are byte-identical.
pub fn command_log(log: &str) -> String {
    log.split_inclusive('\n')
        .filter(|line| {
            decode(line.as_bytes()).is_ok_and(|m| {
                m.role == Role::Control
                    && matches!(m.payload, Payload::Command(_) | Payload::EndOfRound {})
            })
        })
        .collect()
}
