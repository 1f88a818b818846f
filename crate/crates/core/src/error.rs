use thiserror::Error;

/// Errors produced by design construction, analyses, and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Arm specifications that cannot produce a valid schedule, e.g. an entry
    /// threshold that is never reached before the trial would end.
    #[error("invalid design: {0}")]
    InvalidDesign(String),

    /// An argument outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Too few observations for the requested analysis.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A numerical routine failed to converge or produced a non-finite value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Configuration file problems; the message names the offending field.
    #[error("config error: {0}")]
    Config(String),

    /// Replication engine failures, e.g. the per-replication error tally
    /// exceeding its tolerance.
    #[error("harness error: {0}")]
    Harness(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
