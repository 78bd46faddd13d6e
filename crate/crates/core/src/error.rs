use std::path::PathBuf;

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, JstnError>;

#[derive(Debug, Error)]
pub enum JstnError {
    /// Operand shapes are incompatible for the requested operation.
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    /// Input width does not match the encoder registered for a domain role.
    #[error("encoder for role {role} expects width {expected}, got {actual}")]
    RoleWidth {
        role: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A hyperparameter or argument is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// API misuse, e.g. calling backward on a non-scalar node.
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed or inconsistent data (labels, schema, empty inputs).
    #[error("data error: {0}")]
    Data(String),

    /// Configuration file or override could not be applied.
    #[error("config error: {0}")]
    Config(String),

    /// Input outside an operation's mathematical domain (e.g. log of a non-positive).
    #[error("domain error: {0}")]
    Domain(String),

    /// A loss term became NaN or infinite during training.
    #[error("non-finite value in {term} at epoch {epoch}")]
    NonFinite { term: String, epoch: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl JstnError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        JstnError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class: 1 configuration, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            JstnError::Parameter(_) | JstnError::Usage(_) | JstnError::Config(_) => 1,
            JstnError::Dimension { .. }
            | JstnError::RoleWidth { .. }
            | JstnError::Data(_)
            | JstnError::Io { .. }
            | JstnError::Csv(_)
            | JstnError::Json(_) => 2,
            JstnError::Domain(_) | JstnError::NonFinite { .. } => 3,
        }
    }
}
