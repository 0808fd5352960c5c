use thiserror::Error;

/// Errors raised across the library.
///
/// The variants map onto the process exit codes of the command-line driver:
/// configuration problems, solver breakdowns, and ladders that ran out before
/// the boundary layer settled.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("operator is not monotone: quotient {quotient:.3e} at p = {p:?}, q = {q:?}")]
    OperatorInvalid {
        p: Vec<f64>,
        q: Vec<f64>,
        quotient: f64,
    },

    #[error("{method} failed after {iterations} iterations (residual {residual:.3e}): {reason}")]
    SolverFailure {
        method: &'static str,
        iterations: usize,
        residual: f64,
        reason: String,
        trace: Vec<f64>,
    },

    #[error("energy increased from {before:.17e} to {after:.17e} at iteration {iteration}")]
    EnergyIncrease {
        iteration: usize,
        before: f64,
        after: f64,
    },

    #[error("not converged: {0}")]
    NotConverged(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) | Error::InvalidMesh(_) => 2,
            Error::NotConverged(_) => 4,
            _ => 3,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
