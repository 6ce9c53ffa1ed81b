use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A drift, diffusion or Lyapunov evaluation produced a non-finite value.
    #[error("non-finite evaluation at x = {x:?}")]
    DomainViolation { x: Vec<f64> },

    /// A parameter guard was violated; the message names the inequality.
    #[error("configuration error: {0}")]
    Config(String),

    /// The step size exceeds a derived admissibility ceiling.
    #[error("step size h = {h} exceeds the required ceiling {h_max} ({condition})")]
    StepTooLarge {
        h: f64,
        h_max: f64,
        condition: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("estimation error: {0}")]
    Estimation(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
