use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice spec: {0}")]
    InvalidSpec(String),

    #[error("basis dimension {dim} exceeds the configured limit {limit}")]
    Capacity { dim: usize, limit: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Lanczos did not converge after {restarts} restarts (best residuals {residuals:?})")]
    NoConvergence { restarts: usize, residuals: Vec<f64> },

    #[error("operation requires a hard-core basis (n_max = 1)")]
    NotHardCore,

    #[error("density matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("inconsistent tomography inputs: purity - sum x^2 = {0:e}")]
    InconsistentTomography(f64),

    #[error("{0}")]
    Undefined(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
