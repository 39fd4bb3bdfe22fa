use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or non-finite input.
    #[error("input error: {0}")]
    Input(String),

    /// A caller-side precondition does not hold (e.g. normal requested for a non-contact).
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// A point was evaluated inside the hard core of a pair potential.
    #[error("domain error: balls {j} and {k} at distance {distance} inside hard core {radius}")]
    Domain { j: usize, k: usize, distance: f64, radius: f64 },

    #[error("projection did not converge after {iterations} sweeps (worst residual {worst_residual:e})")]
    Convergence { iterations: usize, worst_residual: f64 },

    #[error("shell series diverges: {0}")]
    Divergent(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
