//! Error taxonomy shared by the whole crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimensions or block layout are inconsistent.
    #[error("structural: {0}")]
    Structural(String),
    /// A scalar parameter is out of its admissible range.
    #[error("parameter: {0}")]
    Parameter(String),
    /// External data could not be ingested; `line` is 1-based.
    #[error("ingestion: line {line}: {msg}")]
    Ingestion { line: usize, msg: String },
    /// A numerical oracle failed to meet its contract (never silently accepted).
    #[error("oracle failure: {0}")]
    OracleFailure(String),
    /// The operation is valid but not supported for this instance shape.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// The call sequence violated a state precondition.
    #[error("state: {0}")]
    State(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
