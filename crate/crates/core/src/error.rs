use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown problem family `{0}`")]
    UnknownFamily(String),

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("resource guard exceeded: {0}")]
    ResourceGuard(String),

    #[error("integer overflow while evaluating {0}")]
    Overflow(&'static str),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("no reference solution available: {0}")]
    NoOracle(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("target accuracy {epsilon} not reached up to n = {n_max}")]
    AccuracyNotReached { epsilon: f64, n_max: u32 },
}

impl Error {
    /// Process exit code for the command-line tool: 3 for guard and
    /// budget refusals, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ResourceGuard(_) | Error::Overflow(_) | Error::AccuracyNotReached { .. } => 3,
            _ => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
