use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (negative time,
    /// Hurst index outside `(0, 1)`, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix that must be symmetric positive semidefinite is not, beyond
    /// the round-off tolerance.
    #[error("not positive semidefinite: {0}")]
    NotPsd(String),

    #[error("quadrature did not converge for {what} (residual estimate {residual:e})")]
    Quadrature { what: String, residual: f64 },

    #[error("integral diverges: {0}")]
    Divergent(String),

    #[error("Riccati integration blew up at t = {t}")]
    BlowUp { t: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
