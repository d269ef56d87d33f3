use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum NtkError {
    /// A caller broke an operation's precondition (dimensions, ranges, domains).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An exhaustive oracle refused to run because the search space is too large.
    #[error("combinatorial budget exceeded: {what} requires {required} candidates, limit is {limit}")]
    Budget {
        what: &'static str,
        required: u128,
        limit: u128,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input in {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl NtkError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        NtkError::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NtkError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        NtkError::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, NtkError>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {{
        let holds: bool = $cond;
        if !holds {
            return Err($crate::error::NtkError::Contract(format!($($arg)+)));
        }
    }};
}
pub(crate) use ensure;
