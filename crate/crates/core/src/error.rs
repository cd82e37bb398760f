use thiserror::Error;

/// Errors produced by the `ardnet` library.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs are inconsistent with each other (dimension mismatch, unknown
    /// attribute, bad configuration value).
    #[error("validation error: {0}")]
    Validation(String),

    /// An argument lies outside the domain of an operation (e.g. `i == j`).
    #[error("domain error: {0}")]
    Domain(String),

    /// Exhaustive enumeration was requested beyond the supported size.
    #[error("capacity error: exhaustive enumeration supports n <= {max}, got n = {n}")]
    Capacity { n: usize, max: usize },

    /// Malformed input file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Every grid point received zero posterior weight.
    #[error("degenerate evidence: all posterior weights are zero")]
    DegenerateEvidence,

    /// The chain never reached a state within tolerance of the observed ARD.
    #[error("no network within tolerance after {iterations} iterations (delta = {delta}); delta0 is likely too small")]
    NoFeasibleState { iterations: usize, delta: f64 },

    #[error("empty trace: {0}")]
    EmptyTrace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Whether the error stems from user input rather than a runtime failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Domain(_) | Error::Parse { .. } | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
