use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid Laplace scale {0}: must be positive and finite")]
    InvalidScale(f64),

    #[error("privacy budget exceeded: spending {requested} on top of {spent} exceeds total {total}")]
    BudgetExceeded { spent: f64, requested: f64, total: f64 },

    #[error("horizon exceeded: account already holds {0} iterations")]
    HorizonExceeded(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("empty search grid: {0}")]
    EmptyGrid(String),

    #[error("traces do not share an objective: {0}")]
    MismatchedObjective(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
