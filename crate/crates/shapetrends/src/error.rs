//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition (non-unit point, shape
    /// mismatch, bad argument).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Log map requested between antipodal points.
    #[error("log map undefined: points are antipodal")]
    Antipodal,

    /// Operation evaluated outside its domain (cut locus, degenerate plane).
    #[error("domain error: {0}")]
    Domain(String),

    /// All landmarks coincide, no shape information left after centering.
    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    /// Pre-shape of rank < m-1; the rotation fiber is singular there.
    #[error("singular fiber: pre-shape rank below m-1")]
    SingularFiber,

    /// Capability not available on this manifold (e.g. curvature tensor).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Total variance is zero, coefficient of determination undefined.
    #[error("undefined variance: total variance is zero")]
    UndefinedVariance,

    /// An iterative solver failed to reach its tolerance.
    #[error("did not converge: {context} (residual {residual:.3e})")]
    NonConvergence { context: String, residual: f64 },

    /// Structured parse failure with 1-based line number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
