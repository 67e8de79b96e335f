use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model or run configuration is invalid or incomplete.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input data.
    #[error("input error: {0}")]
    Input(String),

    /// A numerical routine failed to reach its tolerance.
    #[error("convergence failure: {message} (achieved estimate {estimate}, error bound {error_bound})")]
    Convergence {
        message: String,
        estimate: f64,
        error_bound: f64,
    },

    /// The operation is not defined for this family or configuration.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
