//! Geodesic tracing over pluggable Riemannian metric fields.
//!
//! The central object is a [`metric::MetricField`]: a positive-definite
//! matrix field rho(x) on an open chart domain, with analytic or
//! finite-difference first derivatives. On top of it sit
//!
//! - [`frames`]: per-point linear frames y = A x with rho = A^T A, their
//!   inverses, rotations, and gradient-aligned rotations;
//! - [`geodesic`]: two interchangeable geodesic formulations (the
//!   gradient-of-stretch form in chart arclength and the classical
//!   Christoffel form in metric arclength), trace comparison, and
//!   convergence studies;
//! - [`wavefront`]: fans of geodesics, equal-arclength level sets, and the
//!   Huygens-construction checks that tie the two pictures together;
//! - [`builtin`]: ready-made metric fields (flat, sphere chart, hyperbolic
//!   half-plane, smooth isotropic lenses, gridded index fields, graded
//!   interfaces).
//!
//! Everything is deterministic: fixed seeds, fixed step counts, parallel
//! fan tracing with order-preserving collection.

pub mod builtin;
pub mod error;
pub mod frames;
pub mod geodesic;
pub mod linalg;
pub mod metric;
pub mod wavefront;

pub use builtin::{builtin_metric, MetricParams};
pub use error::{Error, Result};
pub use frames::{FrameField, RotationMatrix, ScalarField};
pub use geodesic::{
    compare_traces, convergence_study, trace, ConvergenceStudy, ConvergenceVerdict,
    DeviationReport, Formulation, GeodesicTrace, RayState, TraceLimit,
};
pub use linalg::{SquareMatrix, SymmetricMatrix};
pub use metric::MetricField;
pub use wavefront::{
    equal_increment_check, gradient_alignment_check, huygens_tangency_check, level_set,
    pair_turning_rate, trace_fan, trace_fan_directions, GeodesicFan, HuygensReport, LevelSet,
    PairEstimate,
};
