use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input data or arguments.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A configuration that cannot be calibrated or evaluated numerically,
    /// e.g. a zero bandwidth or an exhausted survivor set.
    #[error("calibration failure: {0}")]
    Calibration(String),

    /// The detector was stepped after it stopped accepting observations.
    #[error("detector state error: {0}")]
    State(String),

    #[error("initialization failed after {attempts} attempts: {reason}")]
    Initialization { attempts: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn calibration(msg: impl Into<String>) -> Self {
        Error::Calibration(msg.into())
    }

    /// Short machine-readable tag used in CLI error records.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Calibration(_) => "calibration_failure",
            Error::State(_) => "state_error",
            Error::Initialization { .. } => "initialization_failure",
            Error::Io(_) => "io_error",
            Error::Json(_) => "json_error",
        }
    }
}
