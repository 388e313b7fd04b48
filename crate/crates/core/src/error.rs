use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("lattice side must be at least 3 (got {0})")]
    SideTooSmall(usize),

    #[error("lattice dimension must be positive")]
    ZeroDimension,

    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("site {site}: pre-renormalization norm {norm:.6e} fell below sqrt(N)/2 (step size too large)")]
    StepTooLarge { site: usize, norm: f64 },

    #[error("replica {replica}, site {site}: |value| = {value:.6e} exceeded the blow-up guard")]
    BlowUp { replica: usize, site: usize, value: f64 },

    #[error("matrix is not positive semidefinite (pivot {pivot:.6e} at row {row})")]
    NotPsd { row: usize, pivot: f64 },

    #[error("the integral diverges: {0}")]
    Divergent(String),

    #[error("quadrature did not converge: last successive difference {difference:.3e} at {cells} cells per axis")]
    NotConverged { difference: f64, cells: usize },

    #[error("dense Green function limited to {limit} sites (lattice has {sites})")]
    DenseGuard { sites: usize, limit: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
