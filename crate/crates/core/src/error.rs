use thiserror::Error;

/// Errors shared by every module of the lab.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical routine failed to reach its tolerance.
    #[error("numeric error: {message} (estimate {estimate:.3e}, error {error:.3e})")]
    Numeric {
        message: String,
        estimate: f64,
        error: f64,
    },
    /// A configured resource cap (e.g. particle count) was exceeded.
    #[error("resource error: {0}")]
    Resource(String),
    /// The caller asked for something the inputs cannot provide.
    #[error("usage error: {0}")]
    Usage(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Domain(msg.into()))
}

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Usage(msg.into()))
}

pub fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        domain(format!("beta must lie in (0,1), got {beta}"))
    }
}
