use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("support guard violated: {0}")]
    SupportViolation(String),

    #[error("CFL condition violated: dt = {dt}, limit = {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("symbol vanishes on the light-cone band at {0}")]
    VanishingSymbol(String),

    #[error("iteration did not converge after {iterations} iterations (last residual {last:.3e})")]
    Divergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("CG stagnated after {iterations} iterations (residual {last:.3e})")]
    Stagnation {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("format: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for the numerical-divergence family (mapped to exit code 3 by the CLI).
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::Stagnation { .. } | Error::NonFinite(_)
        )
    }
}
