//! Error type shared by the solvers and mechanism entry points.

use thiserror::Error;

/// Everything that can go wrong when running a mechanism on bad input.
///
/// Numerical trouble inside an otherwise well-posed instance (a vanishing
/// pivot, a degenerate clearing equation) is reported here too, so callers
/// can distinguish "your input is malformed" from "this instance has no
/// answer".
#[derive(Debug, Clone, Error, PartialEq)]
pub enum EngineError {
    /// Vector lengths or signal matrix dimensions disagree with `n`/`m`.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The instance shape is outside what the mechanism supports
    /// (for example a one-good-per-buyer auction with more buyers than goods).
    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),

    /// The instance is bigger than the exhaustive solvers are willing to
    /// enumerate.
    #[error("instance too large: {0}")]
    SizeGuard(String),

    /// Model coefficients violate the assumptions the payment rules need
    /// (positive signal slopes, own-effect ratios above one).
    #[error("model validation failed: {0}")]
    InvalidModel(String),

    /// A bid is malformed on its face, before any consistency analysis
    /// (wrong length, non-finite entry, out-of-range coefficient).
    #[error("invalid bid: {0}")]
    InvalidBid(String),

    /// A linear solve hit a pivot too small to trust.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// A clearing equation that should pin down a unique price failed to.
    #[error("degenerate clearing condition: {0}")]
    DegenerateClearing(String),

    /// A non-finite number appeared where a real was required.
    #[error("non-finite input: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, EngineError>;
