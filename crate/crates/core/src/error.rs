use thiserror::Error;

/// Errors raised by the estimators and the system model.
#[derive(Debug, Error)]
pub enum NaifsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cannot construct map: {0}")]
    Construction(String),

    #[error("unsupported capability: {0}")]
    Unsupported(String),

    #[error("point outside the admissible domain: {0}")]
    Domain(String),

    #[error("map is not differentiable at {0}")]
    NonDifferentiable(String),

    #[error("exact search refused: {size} candidates exceeds the limit of {limit}")]
    ComplexityGuard { size: usize, limit: usize },

    #[error("every fit window is saturated: {0}")]
    Saturation(String),

    #[error("resolution failure: {0}")]
    Resolution(String),

    #[error("precondition not met: {0}")]
    Precondition(String),

    #[error("not exact at this scale: {0}")]
    NotExact(String),

    #[error("not expansive at this scale: {0}")]
    NotExpansive(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, NaifsError>;

impl From<serde_json::Error> for NaifsError {
    fn from(e: serde_json::Error) -> Self {
        NaifsError::Serialization(e.to_string())
    }
}

impl From<csv::Error> for NaifsError {
    fn from(e: csv::Error) -> Self {
        NaifsError::Serialization(e.to_string())
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(NaifsError::InvalidInput(msg.into()))
}
