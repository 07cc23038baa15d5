use thiserror::Error;

/// Errors raised by the simulation engine, the estimators and the exact oracles.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("initial set is empty")]
    EmptyInitial,
    #[error("column {column} has the wrong parity for row {row}")]
    OddColumn { column: i64, row: i64 },
    #[error("window of {needed} sites exceeds the configured maximum of {max}")]
    WindowExceeded { needed: usize, max: usize },
    #[error("operation needs a non-empty row")]
    EmptySet,
    #[error("no open path reaches row {0}")]
    NoPath(i64),
    #[error("bracket failure: {unresolved} of {replicas} replicas never agreed at row {rows}")]
    BracketFailure {
        unresolved: usize,
        replicas: usize,
        rows: usize,
    },
    #[error("instance too large for exact computation: {0}")]
    TooLarge(String),
    #[error("window mismatch: {0} vs {1}")]
    WindowMismatch(usize, usize),
    #[error("coupling support violates inclusion: {0}")]
    InvalidCoupling(String),
    #[error("degenerate block geometry: {0}")]
    Degenerate(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
