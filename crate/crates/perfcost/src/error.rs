use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("empty data: {0}")]
    EmptyData(String),
    #[error("linear algebra error: {0}")]
    LinAlg(String),
    #[error("map evaluation produced a non-finite value at point index {index}")]
    MapEval { index: usize },
    #[error("problem size {n}x{m} exceeds the exact-solver cap {cap}; use sinkhorn_coupling instead")]
    SizeCap { n: usize, m: usize, cap: usize },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("optimization failed: {0}")]
    Optimization(String),
    #[error("insufficient data: need at least {need} samples, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("ill-posed regression: {0}")]
    IllPosed(String),
    #[error("learning rate too large: {0}")]
    LearningRate(String),
    #[error("inversion failed: {0}")]
    Inversion(String),
    #[error("identifiability error: {0}")]
    Identifiability(String),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
