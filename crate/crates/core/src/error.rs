use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeaError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty point cloud")]
    EmptyCloud,

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("point ({x1}, {x2}) lies outside the admissible region: {reason}")]
    OutOfDomain { x1: f64, x2: f64, reason: String },

    #[error("non-positive loss value {value} for term {index}")]
    NonPositiveLoss { index: usize, value: f64 },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("reference field has zero RMS; relative error undefined")]
    ZeroReference,

    #[error("manufactured boundary trace is not band-limited: projection error {error:e} exceeds {tolerance:e}")]
    Projection { error: f64, tolerance: f64 },

    #[error("unsupported format `{0}`")]
    Format(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MeaError>;
