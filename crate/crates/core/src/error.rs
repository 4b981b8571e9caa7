use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input value")]
    NonFiniteInput,

    #[error("input outside the function domain: {0}")]
    OutOfDomain(String),

    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("model has not been fitted")]
    Unfitted,

    #[error("degenerate random draw: {0}")]
    Degenerate(String),

    #[error("target unattainable: {0}")]
    Unattainable(String),

    #[error("linear system is numerically singular")]
    Singular,

    #[error("training diverged at epoch {epoch}: train mse {mse}")]
    Diverged { epoch: usize, mse: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed csv: {0}")]
    Csv(String),
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
