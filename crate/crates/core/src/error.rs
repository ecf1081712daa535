use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate trial: {0}")]
    DegenerateTrial(String),

    #[error("singular denominator: {0}")]
    SingularDenominator(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate partition: {0}")]
    DegeneratePartition(String),

    #[error("degenerate fuzzy class {class}: {reason}")]
    DegenerateClass { class: usize, reason: String },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse grouping used by front ends to choose an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad configuration or parameter values.
    Usage,
    /// Input files missing, unreadable or malformed.
    Format,
    /// A numerical degeneracy in otherwise valid input.
    Compute,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidParameter(_) | Error::Dimension(_) => ErrorCategory::Usage,
            Error::Format(_) | Error::Io(_) | Error::Json(_) => ErrorCategory::Format,
            Error::DegenerateTrial(_)
            | Error::SingularDenominator(_)
            | Error::DegeneratePartition(_)
            | Error::DegenerateClass { .. }
            | Error::UndefinedCorrelation(_)
            | Error::NonFinite(_) => ErrorCategory::Compute,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
