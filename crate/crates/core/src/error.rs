use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension overflow: binom({n}+{d}-1, {n}) does not fit in usize")]
    DimensionOverflow { d: usize, n: usize },

    #[error("symmetric dimension {dim} exceeds the configured cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("n must be odd (got {0})")]
    EvenDegree(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("invalid body: {0}")]
    InvalidBody(String),

    #[error("ellipsoid solver did not converge after {iterations} updates (max violation {violation:.3e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("negative radicand {value:.3e} beyond tolerance (corrupted approximant?)")]
    NegativeRadicand { value: f64 },

    #[error("invalid approximant: {0}")]
    InvalidApproximant(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
