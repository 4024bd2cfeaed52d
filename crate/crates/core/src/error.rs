//! Error type shared by all library modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
    format!("({})", parts.join(", "))
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {} lies outside the domain of `{metric}`: axis {axis} bound {bound}", fmt_point(point))]
    DomainViolation {
        metric: String,
        point: Vec<f64>,
        axis: usize,
        bound: String,
    },

    #[error("`{metric}` is not positive definite at {}: leading minor {minor} is not positive", fmt_point(point))]
    NotPositiveDefinite {
        metric: String,
        point: Vec<f64>,
        minor: usize,
    },

    #[error("`{metric}` is ill-conditioned at {}: condition number {cond:.3e} exceeds {limit:.1e}", fmt_point(point))]
    IllConditioned {
        metric: String,
        point: Vec<f64>,
        cond: f64,
        limit: f64,
    },

    #[error("no finite-difference stencil fits inside the domain of `{metric}` at {} on axis {axis}", fmt_point(point))]
    StencilFailed {
        metric: String,
        point: Vec<f64>,
        axis: usize,
    },

    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("direction must be a unit vector: |u| = {norm} differs from 1 beyond {tol:.1e}")]
    NonUnitDirection { norm: f64, tol: f64 },

    #[error("direction vector has zero length")]
    ZeroDirection,

    #[error("matrix is not orthogonal: max |B^T B - I| entry is {defect:.3e} (tolerance {tol:.1e})")]
    NotOrthogonal { defect: f64, tol: f64 },

    #[error("frame matrix is singular: A^T A admits no Cholesky factorization (leading minor {minor})")]
    SingularFrame { minor: usize },

    #[error("scalar field gradient is numerically zero (square {square:.3e}); cannot align a frame to it")]
    DegenerateGradient { square: f64 },

    #[error("step size must be positive, got {h}")]
    InvalidStep { h: f64 },

    #[error("trace limit must be non-negative, got {limit}")]
    InvalidLimit { limit: f64 },

    #[error("step budget exhausted after {steps} steps before reaching the trace limit")]
    StepBudgetExhausted { steps: usize },

    #[error("traces are not comparable: {reason}")]
    NotComparable { reason: String },

    #[error("traces overlap only degenerately in S (max common S = {max_common:.3e})")]
    DisjointRanges { max_common: f64 },

    #[error("convergence study needs >= 3 step sizes, each half the previous; {reason}")]
    BadStepLadder { reason: String },

    #[error("angular fans require a 2-dimensional chart, got dimension {dim}")]
    FanNeedsPlane { dim: usize },

    #[error("fan needs at least {min} rays for this operation, got {got}")]
    FanTooSmall { min: usize, got: usize },

    #[error("no fan ray reaches S = {s} (max usable S = {max_s:.6})")]
    LevelOutOfRange { s: f64, max_s: f64 },

    #[error("fan too sparse at S = {s}: neighbouring level-set points are {max_gap:.4} apart (limit {limit})")]
    FanTooSparse { s: f64, max_gap: f64, limit: f64 },

    #[error("S increment {delta_s} too large for the disc approximation: delta_S * kappa = {product:.3e} exceeds {limit}")]
    DiscStepTooLarge {
        delta_s: f64,
        product: f64,
        limit: f64,
    },

    #[error("pair estimator degenerated: |sin| argument {arg:.3e} exceeds 1; shrink delta_r or lambda")]
    PairDegenerate { arg: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("unknown built-in metric `{name}` (expected euclidean, sphere, poincare_half_plane, isotropic_index or grid_index)")]
    UnknownMetric { name: String },

    #[error("metric `{metric}` requires parameter `{key}`")]
    MissingParam { metric: String, key: String },

    #[error("grid file {path}, line {line}: {reason}")]
    GridFormat {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
