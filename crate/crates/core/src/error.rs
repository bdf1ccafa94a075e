use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("closed-form smoothing is not available for `{0}`")]
    NoClosedForm(String),
    #[error("problem `{0}` has no smooth (stochastic gradient) structure")]
    NotSmooth(String),
    #[error("a zero target deviation is unachievable for distinct points")]
    UnachievableVariance,
    #[error("register needs {qubits} qubits, state vectors are limited to {limit}")]
    RegisterTooLarge { qubits: usize, limit: usize },
    #[error("fixed-point overflow in stage `{0}`")]
    FixedPointOverflow(&'static str),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
