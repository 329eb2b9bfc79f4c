//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

/// Errors produced by the callguard library.
#[derive(Error, Debug)]
pub enum Error {
    /// A record could not be parsed; the message names the offending field.
    #[error("parse error: {0}")]
    Parse(String),

    /// An invariant on the data model was violated.
    #[error("validation error: {0}")]
    Validation(String),

    /// A configuration problem (unknown source tag, missing provider, dim mismatch).
    #[error("configuration error: {0}")]
    Config(String),

    /// A required input file or artifact is absent.
    #[error("missing input: {0}")]
    MissingInput(String),

    /// A transport failure talking to a remote backend; safe to retry.
    #[error("transport error (retriable): {0}")]
    Transport(String),

    /// A backend returned data that violates its contract (e.g. wrong dimension).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A metric is undefined for the given inputs (e.g. single-class AUROC).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// An optimizer failed to reach its tolerance within the iteration cap.
    #[error("optimizer did not converge: final gradient norm {grad_norm}")]
    NonConvergence { grad_norm: f64 },

    /// A numeric guard tripped (zero norm, non-finite value).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code contract: 0 success, 2 usage, 3 config, 4 missing-input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 3,
            Error::MissingInput(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
