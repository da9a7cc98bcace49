use std::io;

use thiserror::Error;

use crate::dynamics::EventKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("node index {index} out of range for network of {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("illegal transition: {kind:?} on node {node}")]
    IllegalTransition { node: usize, kind: EventKind },

    #[error("event at t={event_t} precedes current time t={now}")]
    TimeOrder { event_t: f64, now: f64 },

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("policy error: {0}")]
    Policy(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("config key `{key}`: {msg}")]
    ConfigKey { key: String, msg: String },

    #[error("calibration of {policy} failed: {msg}")]
    Calibration { policy: String, msg: String },

    #[error("event log replay failed: {0}")]
    Replay(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigKey { .. }
            | Error::Configuration(_)
            | Error::Parameter(_)
            | Error::Parse { .. }
            | Error::Validation(_) => 2,
            Error::Calibration { .. } => 3,
            Error::Numerical(_)
            | Error::InvariantViolation(_)
            | Error::IllegalTransition { .. }
            | Error::TimeOrder { .. }
            | Error::Policy(_) => 4,
            _ => 1,
        }
    }
}
