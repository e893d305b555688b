use std::fmt;
use std::path::PathBuf;

/// Transition rule broken by an infeasible event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// A replay must follow a play or replay of the same item.
    ReplayAfterSkip,
    /// A replay with no item consumed yet.
    ReplayBeforeStart,
    /// The consumption cap `m` is already reached for the current item.
    CapExceeded,
    /// Skip or play requested after the last item.
    BeyondLastItem,
    /// The event's item position does not follow from the previous state.
    PositionMismatch,
    /// A session without events.
    EmptySession,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::ReplayAfterSkip => "a skipped item cannot be replayed",
            Rule::ReplayBeforeStart => "no item has been consumed yet, nothing to replay",
            Rule::CapExceeded => "item already consumed the maximum number of times",
            Rule::BeyondLastItem => "no item left after the last item of the bundle",
            Rule::PositionMismatch => "event position does not follow the previous event",
            Rule::EmptySession => "session has no events",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("constraint violation: {rule}")]
    Constraint { rule: Rule },

    #[error("session {session_id}: event {index}: {rule}")]
    InvalidSession {
        session_id: String,
        index: usize,
        rule: Rule,
    },

    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown playlist `{0}`")]
    UnknownPlaylist(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("arithmetic overflow: {0}")]
    Overflow(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures of the numerics rather than of the input data.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::Divergence { .. } | Error::Overflow(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
