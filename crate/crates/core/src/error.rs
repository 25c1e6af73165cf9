use thiserror::Error;

/// Errors raised by the toolkit.
///
/// The variants map onto the runner's exit codes: configuration problems
/// exit with 1, solver failures with 2 and consistency failures with 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("field is bound to grid {found}, expected grid {expected}")]
    GridMismatch { expected: u64, found: u64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("consistency check failed: {what} (defect {defect:e})")]
    Consistency { what: String, defect: f64 },

    #[error("time integration diverged at t = {time}")]
    Divergence { time: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::GridMismatch { .. } | Error::Precondition(_) => 1,
            Error::Solver { .. } | Error::Divergence { .. } | Error::Io(_) => 2,
            Error::Consistency { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
