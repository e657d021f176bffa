use std::path::PathBuf;

use crate::protocol::BlockKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// A parameter violates its range or ordering constraint. `key` is the
    /// dotted config name of the offending value.
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("length mismatch for {what}: got {got} points, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("non-finite activation at step {step} (t = {t} ms)")]
    NonFinite { step: usize, t: f64 },

    #[error("trajectory has no frames")]
    EmptyTrajectory,

    #[error("{block} block failed: {source}")]
    Block {
        block: BlockKind,
        #[source]
        source: Box<Error>,
    },

    #[error("memory seeding failed: {0}")]
    Seeding(#[source] Box<Error>),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown parameter path `{0}`")]
    UnknownPath(String),

    #[error("unknown preset `{0}` (available: strut, bath)")]
    UnknownPreset(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad input (configuration, validation)
    /// rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidGrid(_)
                | Error::InvalidParameter { .. }
                | Error::Config(_)
                | Error::UnknownPath(_)
                | Error::UnknownPreset(_)
        )
    }
}
