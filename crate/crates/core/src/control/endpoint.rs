use crate::il::{decode, encode, LineHandler, Message, Payload, Role, PROTOCOL_VERSION};

use super::ReferenceControl;

/// The control's side of a session: answers handshakes, directives,
/// notifications and KPI requests.
#[derive(Debug, Clone)]
pub struct ControlEndpoint {
    control: ReferenceControl,
    model_hash: String,
    version: String,
}

impl ControlEndpoint {
    pub fn new(control: ReferenceControl, model_hash: impl Into<String>) -> Self {
        ControlEndpoint {
            control,
            model_hash: model_hash.into(),
            version: PROTOCOL_VERSION.to_string(),
        }
    }

    /// Pretends to speak another protocol version (for handshake tests).
    pub fn with_version(mut self, version: &str) -> Self {
        self.version = version.to_string();
        self
    }

    pub fn control(&self) -> &ReferenceControl {
        &self.control
    }

    pub fn into_control(self) -> ReferenceControl {
        self.control
    }

    fn reply(&self, to: &Message, payload: Payload) -> String {
        let mut msg = Message::new(Role::Control, to.round, to.t, to.corr.clone(), payload);
        msg.v = self.version.clone();
        encode(&msg)
    }

    fn error(&self, to: &Message, code: &str, message: String) -> Vec<String> {
        vec![self.reply(
            to,
            Payload::Error {
                code: code.into(),
                message,
            },
        )]
    }

    pub fn handle(&mut self, msg: &Message) -> Vec<String> {
        match &msg.payload {
            Payload::Hello { role, model_hash, session } => {
                if msg.v != self.version {
                    return self.error(
                        msg,
                        "version-mismatch",
                        format!("version mismatch: ours {}, peer {}", self.version, msg.v),
                    );
                }
                if *role == Role::Control {
                    return self.error(msg, "role", "a control cannot open a session with a control".into());
                }
                if *model_hash != self.model_hash {
                    return self.error(msg, "model-mismatch", self.model_hash.clone());
                }
                vec![self.reply(
                    msg,
                    Payload::HelloAck {
                        model_hash: self.model_hash.clone(),
                        session: session.clone(),
                    },
                )]
            }
            Payload::Directive { directive, .. } => {
                let ack = self.control.apply_directive(directive);
                vec![self.reply(msg, Payload::Ack(ack))]
            }
            Payload::Notify { events } => {
                let commands = self.control.on_notifications(events);
                let mut out: Vec<String> = commands
                    .into_iter()
                    .filter(|c| !c.is_end_of_round())
                    .map(|c| self.reply(msg, Payload::Command(c)))
                    .collect();
                out.push(self.reply(
                    msg,
                    Payload::Data {
                        points: self.control.round_data(),
                    },
                ));
                out.push(self.reply(msg, Payload::EndOfRound {}));
                out
            }
            Payload::KpiRequest {} => vec![self.reply(
                msg,
                Payload::Kpi {
                    metrics: self.control.export_control_kpi(),
                },
            )],
            Payload::Close {} => Vec::new(),
            other => self.error(msg, "unexpected", format!("control does not accept {}", other.kind())),
        }
    }
}

impl LineHandler for ControlEndpoint {
    fn handle_line(&mut self, line: &str) -> Vec<String> {
        match decode(line.as_bytes()) {
            Ok(msg) => self.handle(&msg),
            Err(e) => {
                let msg = Message::new(Role::Control, 0, 0, None, Payload::Close {});
                self.error(&msg, "decode", e.to_string())
            }
        }
    }
}
