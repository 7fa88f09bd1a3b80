use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice shape {m}x{n}: {reason}")]
    InvalidShape { m: usize, n: usize, reason: String },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("plaquette ({0}, {1}) is on the frozen frame")]
    FramePlaquette(usize, usize),

    #[error("resource limit exceeded: {what} (limit {limit}, requested {requested})")]
    ResourceLimit {
        what: &'static str,
        limit: usize,
        requested: usize,
    },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
