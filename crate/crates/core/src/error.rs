use thiserror::Error;

/// Failure modes shared by every solver stage.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("numerical failure: {message} (residual {residual:e})")]
    Numerical { message: String, residual: f64 },
    #[error("optimizer failure after {iterations} iterations: {message}")]
    Optimizer { message: String, iterations: usize },
    #[error("malformed snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numerical(message: impl Into<String>, residual: f64) -> Self {
        Error::Numerical {
            message: message.into(),
            residual,
        }
    }

    /// True for errors caused by user input rather than by the numerics.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Domain(_)
                | Error::Constraint(_)
                | Error::Contract(_)
                | Error::Snapshot(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
