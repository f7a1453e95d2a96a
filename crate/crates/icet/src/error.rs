use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] icet_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("no usable records")]
    NoRecords,
    #[error("{failed} of {total} {algorithm} trials failed")]
    TooManyFailures {
        algorithm: &'static str,
        failed: usize,
        total: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
