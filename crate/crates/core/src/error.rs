use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: wrong shapes, non-finite numbers, asymmetric matrices.
    #[error("invalid input: {0}")]
    Input(String),

    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A hypothesis of an operation does not hold for the supplied data.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A dense factorization or eigensolve failed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An iterative method stopped before reaching its tolerance.
    #[error("{context}: no convergence after {iterations} iterations (residual {residual:.3e})")]
    Convergence {
        context: String,
        iterations: usize,
        residual: f64,
    },

    /// A rejection sampler used its whole budget.
    #[error("sampling failed after {draws} draws: {reason}")]
    Sampling { draws: usize, reason: String },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Prefixes the context of a convergence failure, leaving other variants untouched.
    pub fn with_context(self, prefix: impl std::fmt::Display) -> Self {
        match self {
            Error::Convergence {
                context,
                iterations,
                residual,
            } => Error::Convergence {
                context: format!("{prefix}: {context}"),
                iterations,
                residual,
            },
            Error::Precondition(msg) => Error::Precondition(format!("{prefix}: {msg}")),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
