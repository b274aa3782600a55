//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by geometry, assembly, solvers, planning and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("polytope is unbounded: {0}")]
    Unbounded(String),

    #[error("polytope is empty: {0}")]
    Empty(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("singular dynamics: {0}")]
    Singularity(String),

    #[error("missing or infinite bound on variable {0}")]
    Bound(usize),

    #[error("planning failed: {0}")]
    PlanningFailure(String),

    #[error("degenerate path: {0}")]
    DegeneratePath(String),

    #[error("solver internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
