use thiserror::Error;

/// Errors raised by the simulation and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    #[error("rate row sum {sum} exceeds the declared bound H = {bound} (regime {regime})")]
    RateBoundExceeded { sum: f64, bound: f64, regime: usize },

    #[error("degenerate reflection direction: |x - y|^2 = {0:e}")]
    DegenerateDirection(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("model fault at {input}: {message}")]
    ModelFault { input: String, message: String },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
