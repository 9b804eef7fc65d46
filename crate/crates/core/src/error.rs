use thiserror::Error;

/// Errors raised by the sampler and its supporting operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller passed an argument outside the operation's contract.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// The input is well formed but the operation is undefined on it.
    #[error("domain error: {0}")]
    Domain(String),
    /// The requested combination of settings is not supported.
    #[error("configuration error: {0}")]
    Configuration(String),
    /// An input document does not match the expected schema.
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("rejection cap of {cap} attempts exceeded at stage {stage} (particle {particle})")]
    RejectionCap { stage: usize, particle: usize, cap: usize },
    #[error("all weights are zero at stage {stage}")]
    DegenerateWeights { stage: usize },
    /// The enumeration search exceeded its node budget.
    #[error("enumeration budget exhausted after {found} plans")]
    Budget { found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn argument<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn configuration<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Configuration(msg.into()))
}
