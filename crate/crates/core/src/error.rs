use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, ranges or other caller-supplied values are invalid.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An iterative method failed, a factorization was singular, or a
    /// non-finite value appeared.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("Riccati iteration did not converge in {iterations} iterations (last residual {residual:e})")]
    RiccatiNotConverged { iterations: usize, residual: f64 },

    #[error("polytope is empty")]
    EmptyPolytope,

    #[error("multi-parametric program has no full-dimensional critical region")]
    EmptySolution,

    /// A network or design artifact could not be assembled.
    #[error("construction failed: {0}")]
    Construction(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
