use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by all estimation and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape {shape:?} is inconsistent with data length {len}")]
    ShapeDataMismatch { shape: Vec<usize>, len: usize },

    #[error("tensor dimensions must be positive, got {shape:?}")]
    EmptyDimension { shape: Vec<usize> },

    #[error("mode {mode} out of range for order-{order} tensor (modes are 1-based)")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("column count mismatch: {left} vs {right}")]
    ColumnCountMismatch { left: usize, right: usize },

    #[error("expected order-{expected} model, got order {got}")]
    WrongOrder { expected: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid path set: {0}")]
    InvalidPaths(String),

    #[error("path sampling failed: {0}")]
    SamplingFailed(String),

    #[error("rank deficient: needed {needed} significant singular values, found {found}")]
    RankDeficient { needed: usize, found: usize },

    #[error("ill-conditioned eigenvector matrix (cond = {cond:.3e}, limit = {limit:.3e})")]
    IllConditioned { cond: f64, limit: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("zero-norm vector: {0}")]
    ZeroNorm(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}
