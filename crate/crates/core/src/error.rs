use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: row {row}: {message}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("duplicate record for test `{test_id}` in cycle {cycle_id}")]
    DuplicateRecord { cycle_id: u64, test_id: String },

    #[error("no evaluable cycles (every cycle has fewer than {min_size} test cases)")]
    NoEvaluableCycles { min_size: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("ranking mismatch: {0}")]
    RankingMismatch(String),

    #[error("APFD undefined for a cycle without failing test cases")]
    ApfdUndefined,

    #[error("cycle has {size} test cases but the environment was built for at most {max}")]
    CycleTooLarge { size: usize, max: usize },

    #[error("step called on a finished episode")]
    EpisodeDone,

    #[error("environment has not been reset")]
    NotReset,

    #[error("observation has dimension {actual}, expected {expected}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad input or configuration, as opposed to failures
    /// while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MalformedRow { .. }
                | Error::MissingColumn(_)
                | Error::DuplicateRecord { .. }
                | Error::NoEvaluableCycles { .. }
                | Error::InvalidConfig(_)
                | Error::CycleTooLarge { .. }
                | Error::Unsupported(_)
                | Error::EmptyInput(_)
        )
    }
}
