use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// An iterative routine did not converge, or produced non-finite values.
    #[error("numerical failure in {context}: {detail}")]
    NumericalFailure { context: &'static str, detail: String },

    /// A matrix that must lie in the PSD cone has an eigenvalue below the tolerance.
    #[error("cone violation: min eigenvalue {min_eigenvalue:e} below -{bound:e}")]
    ConeViolation { min_eigenvalue: f64, bound: f64 },

    /// The rejection sampler accepted too few proposals to make progress.
    #[error("contraction sampler stalled for mu={mu}, q={q}: {accepted} accepted of {proposals} proposals")]
    SamplerStall { mu: f64, q: usize, accepted: u64, proposals: u64 },

    #[error("unsupported field: {0}")]
    UnsupportedField(String),

    #[error("unsupported parameter: {0}")]
    UnsupportedParameter(String),

    #[error("argument out of range: {0}")]
    Range(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("replicate {index}: {source}")]
    Replicate {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn numerical(context: &'static str, detail: impl Into<String>) -> Self {
        Error::NumericalFailure {
            context,
            detail: detail.into(),
        }
    }

    /// True for errors that signal a numerical problem rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NumericalFailure { .. } | Error::ConeViolation { .. } | Error::SamplerStall { .. } => true,
            Error::Replicate { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
