use thiserror::Error;

/// Errors produced anywhere in the bandit engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A caller broke a precondition (dimension mismatch, empty input, bad index).
    #[error("contract violation: {0}")]
    Contract(String),
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical routine failed (non-SPD matrix, singular system).
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Every particle carries zero weight.
    #[error("degenerate weights: all particles have zero likelihood")]
    DegenerateWeights,
    /// The reward model has no closed-form posterior for the requested operation.
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),
    /// An invalid configuration, reported with the offending field path.
    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures that abort a single realization rather than the whole run.
    pub fn is_numeric_failure(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::Domain(_) | Error::DegenerateWeights)
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
