use thiserror::Error;

/// Magnitude beyond which an intermediate quantity is treated as divergence.
pub const DIVERGENCE_CAP: f64 = 1e150;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inconsistent or unsupported configuration, detected before any work.
    #[error("configuration error: {0}")]
    Config(String),
    /// A non-finite or overflowing intermediate. Solvers turn this into a
    /// `diverged` verdict instead of propagating it.
    #[error("divergence: {0}")]
    Diverged(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

/// Returns `v` unless it is non-finite or larger than [`DIVERGENCE_CAP`].
#[inline]
pub(crate) fn guard(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() && v.abs() <= DIVERGENCE_CAP {
        Ok(v)
    } else {
        Err(Error::Diverged(format!("{what} = {v}")))
    }
}
