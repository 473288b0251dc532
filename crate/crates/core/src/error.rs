use thiserror::Error;

/// Errors raised by the estimation, inference and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {context} at row {row}")]
    NonFinite { context: String, row: usize },

    #[error("degenerate time domain [{start}, {end}]")]
    DegenerateDomain { start: f64, end: f64 },

    #[error("time {time} lies outside the domain [{start}, {end}]")]
    TimeOutOfDomain { time: f64, start: f64, end: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("matrix is not positive definite at t = {time}")]
    NotPositiveDefinite { time: f64 },

    #[error("rejection sampler acceptance rate {rate:.2e} is below the guard {guard:.0e}")]
    AcceptanceTooLow { rate: f64, guard: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
