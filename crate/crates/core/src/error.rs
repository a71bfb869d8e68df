use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid economy: {0}")]
    InvalidEconomy(String),

    #[error("invalid network request: {0}")]
    InvalidNetwork(String),

    #[error("negative input {value} at position {index}")]
    NegativeInput { index: usize, value: f64 },

    #[error("non-positive price {value} at position {index}")]
    NonPositivePrice { index: usize, value: f64 },

    #[error("calibration leaves productivity z[{index}] = {value} non-positive")]
    NonPositiveProductivity { index: usize, value: f64 },

    #[error("equilibrium not realisable (eps = {eps})")]
    NotRealisable { eps: f64 },

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("log-price system is singular")]
    SingularSystem,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("cancelled")]
    Cancelled,

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
