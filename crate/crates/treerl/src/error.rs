//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("numeric domain violation: {0}")]
    NumericDomain(String),

    #[error("degenerate node: {0}")]
    DegenerateNode(String),

    #[error("non-finite value in {context} (epoch {epoch}, batch {batch}, param norm {param_norm})")]
    NonFinite {
        context: String,
        epoch: usize,
        batch: usize,
        param_norm: f64,
    },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("step called on a finished episode")]
    StepAfterDone,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("invalid spec: {0}")]
    Spec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for spec/input errors, 3 for numeric
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericDomain(_)
            | Error::DegenerateNode(_)
            | Error::NonFinite { .. }
            | Error::Diverged(_) => 3,
            _ => 2,
        }
    }
}
