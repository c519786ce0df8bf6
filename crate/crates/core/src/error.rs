use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function or operator.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular evaluation: {0}")]
    Singular(String),

    /// Two objects that must share a lattice do not.
    #[error("domain mismatch: {0}")]
    Mismatch(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e}): {reason}")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        reason: String,
    },

    /// The constrained descent stopped short of its tolerance; the last
    /// iterate is attached.
    #[error("solver stopped after {} iterations (residual {:.3e}): {reason}", last.iterations, last.residual)]
    NotConverged {
        reason: String,
        last: Box<crate::solver::SolveResult>,
    },

    /// A numerical diagnostic failed (resolution, extrapolation, ...).
    #[error("diagnostic failure: {0}")]
    Diagnostic(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
