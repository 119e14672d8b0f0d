use std::path::PathBuf;

use thiserror::Error;

use crate::he::KeyId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("ciphertext is bound to key {found}, expected key {expected}")]
    WrongKey { expected: KeyId, found: KeyId },

    #[error("invalid operand for {op}: {reason}")]
    InvalidOperand { op: &'static str, reason: String },

    /// The requested operation would push a ciphertext past the depth budget
    /// of its key. Raised before any ledger mutation.
    #[error("depth budget exhausted in {op}: result depth {required} exceeds budget {budget}")]
    BudgetExhausted {
        op: &'static str,
        required: u32,
        budget: u32,
    },

    #[error("sigmoid fit failed: {0}")]
    FitFailure(String),

    #[error("invalid label {0} (labels must be -1 or +1)")]
    InvalidLabel(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("row alignment mismatch: alice has {alice} rows, bob has {bob}")]
    Alignment { alice: usize, bob: usize },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("parse error at row {row}, column `{column}`: {reason}")]
    Parse {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("unknown protocol `{0}`")]
    UnknownProtocol(String),

    #[error("unknown depth combination: {0}")]
    UnknownCombination(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("{path}: {source}")]
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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn operand(op: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidOperand {
            op,
            reason: reason.into(),
        }
    }
}
