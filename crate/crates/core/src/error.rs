use thiserror::Error;

/// Errors for table construction, acceptance, fitting and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent shapes or out-of-range arguments.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Non-finite data where finite values are required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A linear system could not be solved even after regularisation.
    #[error("singular system: {0}")]
    Singular(String),

    /// A numerical procedure failed to produce a usable result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The simulator failed repeatedly for one parameter draw.
    #[error("simulator '{model}' failed after {attempts} attempts at theta = {theta:?}: {reason}")]
    SimulationFailed {
        model: String,
        attempts: usize,
        theta: Vec<f64>,
        reason: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A persisted file did not match the documented format.
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
