use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index set too large: {count} terms exceeds the limit of {limit}")]
    CardinalityOverflow { count: usize, limit: usize },

    #[error("underdetermined system: {rows} rows for {cols} unknowns")]
    UnderdeterminedSystem { rows: usize, cols: usize },

    #[error("rank deficient design: numerical rank {rank} < {cols}")]
    RankDeficient { rank: usize, cols: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("non-finite {what} encountered")]
    NonFinite { what: &'static str },

    #[error("zero variance at the requested point")]
    ZeroVariance,

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("checksum mismatch in {0}")]
    Checksum(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
