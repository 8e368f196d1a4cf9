use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid 2x2 table: {0}")]
    InvalidTable(String),

    #[error("double-zero study (no events in either arm) must be discarded before analysis")]
    DoubleZero,

    #[error("double-n study (all subjects are events in both arms) must be discarded before analysis")]
    DoubleN,

    #[error("non-finite effect estimate: {0}")]
    NonFinite(String),

    #[error("need at least {needed} studies, got {got}")]
    InsufficientStudies { needed: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigen-decomposition failed: {0}")]
    Eigen(String),

    #[error("quadratic-form CDF did not reach accuracy {accuracy:e} within {terms} series terms")]
    CdfNonConvergence { accuracy: f64, terms: usize },

    #[error("estimator `{0}` has no registered implementation")]
    UnsupportedEstimator(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
