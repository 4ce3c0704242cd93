//! Interface layer between the emulation and the control.
//!
//! Time belongs to the emulation: each round it sends one `notify` with the
//! full event batch and waits for the control's commands, which always end
//! with an `end-of-round` token. Every line that crosses a session is kept in
//! a [`SessionLog`]; the log alone is enough to replay a run against a
//! control or to recompute its KPIs.

mod message;
mod replay;
mod session;
mod transport;

use std::time::Duration;

pub use message::{
    decode, encode, DecodeError, Direction, Message, Payload, Role, StreamTag, TapRecord,
    PROTOCOL_VERSION, WIRE_PREFIX,
};
pub use replay::{command_log, replay_backend, ReplayBackend};
pub use session::{open_session, RoundReply, Session, SessionConfig, SessionLog};
pub use transport::{serve, LineHandler, Loopback, StreamTransport, Transport};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IlError {
    #[error("malformed message: {0}")]
    Decode(#[from] DecodeError),
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("version mismatch: ours {ours}, peer {theirs}")]
    VersionMismatch { ours: String, theirs: String },
    #[error("model mismatch: ours {ours}, peer {theirs}")]
    ModelMismatch { ours: String, theirs: String },
    #[error("timed out after {0:?} waiting for the peer")]
    Timeout(Duration),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("malformed command: {0}")]
    MalformedCommand(String),
    #[error("peer reported {code}: {message}")]
    Peer { code: String, message: String },
    #[error("connection closed")]
    Closed,
    #[error("i/o: {0}")]
    Io(String),
    #[error("replay: {0}")]
    Replay(String),
}

impl From<std::io::Error> for IlError {
    fn from(e: std::io::Error) -> Self {
        IlError::Io(e.to_string())
    }
}

#[cfg(test)]
mod tests;
