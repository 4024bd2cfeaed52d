//! Metric fields over chart domains.
//!
//! A [`MetricField`] supplies the symmetric positive-definite tensor
//! rho_ij(x) that turns chart displacements into lengths,
//! ds^2 = sum_ij rho_ij dx_i dx_j. Everything downstream (frames, geodesic
//! stepping, wavefront checks) consumes metrics through this interface, so a
//! user-defined field plugs in exactly like the built-ins.

use crate::error::{Error, Result};
use crate::linalg::{self, SquareMatrix, SymmetricMatrix};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Relative step for finite-difference derivatives: h = 1e-5 * axis scale.
pub const FD_STEP_REL: f64 = 1e-5;
/// Condition-number ceiling beyond which Christoffel assembly refuses.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Sample count for the probabilistic positive-definiteness check.
const PD_SAMPLES: usize = 32;

/// Axis-aligned open box, possibly unbounded on either side of any axis.
#[derive(Debug, Clone)]
pub struct Domain {
    bounds: Vec<(Option<f64>, Option<f64>)>,
}

impl Domain {
    pub fn unbounded(dim: usize) -> Self {
        Self {
            bounds: vec![(None, None); dim],
        }
    }

    /// Per-axis (lower, upper) bounds; `None` means unbounded. Bounds are open.
    pub fn new(bounds: Vec<(Option<f64>, Option<f64>)>) -> Result<Self> {
        for (axis, (lo, hi)) in bounds.iter().enumerate() {
            if let (Some(a), Some(b)) = (lo, hi) {
                if !(a < b) {
                    return Err(Error::InvalidParam {
                        name: format!("domain axis {axis}"),
                        reason: format!("lower bound {a} is not below upper bound {b}"),
                    });
                }
            }
        }
        Ok(Self { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(Option<f64>, Option<f64>)] {
        &self.bounds
    }

    /// Strict interior test; returns the first offending axis.
    pub fn locate(&self, x: &[f64]) -> std::result::Result<(), (usize, String)> {
        for (axis, (lo, hi)) in self.bounds.iter().enumerate() {
            if let Some(a) = lo {
                if !(x[axis] > *a) {
                    return Err((axis, format!("> {a}")));
                }
            }
            if let Some(b) = hi {
                if !(x[axis] < *b) {
                    return Err((axis, format!("< {b}")));
                }
            }
            if !x[axis].is_finite() {
                return Err((axis, "finite".to_string()));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.locate(x).is_ok()
    }

    /// Characteristic length of an axis: the extent when both bounds are
    /// finite, 1 otherwise. Used to scale finite-difference steps.
    pub fn axis_scale(&self, axis: usize) -> f64 {
        match self.bounds[axis] {
            (Some(a), Some(b)) => b - a,
            _ => 1.0,
        }
    }

    /// A finite box inside the domain used for sampling-based checks.
    /// Finite axes are inset slightly from the open bounds; half-open and
    /// unbounded axes get a window of width 2 near the data.
    pub fn sampling_box(&self) -> Vec<(f64, f64)> {
        self.bounds
            .iter()
            .map(|&(lo, hi)| match (lo, hi) {
                (Some(a), Some(b)) => {
                    let inset = 1e-3 * (b - a);
                    (a + inset, b - inset)
                }
                (Some(a), None) => (a + 1e-3, a + 2.0),
                (None, Some(b)) => (b - 2.0, b - 1e-3),
                (None, None) => (-1.0, 1.0),
            })
            .collect()
    }
}

/// First derivatives of the metric tensor: d(i, j, k) = d rho_ij / d x_k,
/// symmetric in (i, j) by construction.
#[derive(Debug, Clone)]
pub struct MetricDerivatives {
    dim: usize,
    data: Vec<f64>,
    /// Axes where the finite-difference stencil had to shift one-sided
    /// because the centred stencil left the domain. Empty for analytic
    /// derivatives.
    pub one_sided_axes: Vec<usize>,
}

impl MetricDerivatives {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
            one_sided_axes: Vec::new(),
        }
    }

    /// Fills from `f(i, j, k)`, queried only for i >= j.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut d = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                for k in 0..dim {
                    let v = f(i, j, k);
                    d.set_entry(i, j, k, v);
                }
            }
        }
        d
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        self.data[(hi * self.dim + lo) * self.dim + k]
    }

    /// Sets d rho_ij / d x_k (and its (j, i) mirror).
    #[inline]
    pub fn set_entry(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        self.data[(hi * self.dim + lo) * self.dim + k] = v;
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..=i {
                for k in 0..self.dim {
                    dev = dev.max((self.get(i, j, k) - other.get(i, j, k)).abs());
                }
            }
        }
        dev
    }
}

/// Connection coefficients Gamma^i_{ab}, symmetric in (a, b).
#[derive(Debug, Clone)]
pub struct ChristoffelTensor {
    dim: usize,
    data: Vec<f64>,
}

impl ChristoffelTensor {
    fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, a: usize, b: usize) -> f64 {
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        self.data[(i * self.dim + hi) * self.dim + lo]
    }

    #[inline]
    fn set(&mut self, i: usize, a: usize, b: usize, v: f64) {
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        self.data[(i * self.dim + hi) * self.dim + lo] = v;
    }

    /// Geodesic acceleration: a_i = -Gamma^i_{ab} v_a v_b.
    pub fn acceleration(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut acc = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s += self.get(i, a, b) * v[a] * v[b];
                }
            }
            acc[i] = -s;
        }
        acc
    }
}

pub type EvalFn = dyn Fn(&[f64]) -> SymmetricMatrix + Send + Sync;
pub type DerivFn = dyn Fn(&[f64]) -> MetricDerivatives + Send + Sync;

/// A Riemannian metric over an open chart domain.
///
/// Immutable after construction and shareable across threads. Evaluation is
/// deterministic: the same point always yields bit-identical tensors.
pub struct MetricField {
    label: String,
    dim: usize,
    domain: Domain,
    eval_fn: Box<EvalFn>,
    deriv_fn: Option<Box<DerivFn>>,
}

impl std::fmt::Debug for MetricField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricField")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("analytic_derivatives", &self.deriv_fn.is_some())
            .finish()
    }
}

impl MetricField {
    /// Wraps an evaluation closure (and optional analytic derivatives) as a
    /// metric field. Positive-definiteness is checked at construction on a
    /// fixed deterministic sample of domain points; a failure reports the
    /// offending point and leading minor.
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        domain: Domain,
        eval_fn: Box<EvalFn>,
        deriv_fn: Option<Box<DerivFn>>,
    ) -> Result<Self> {
        if domain.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: domain.dim(),
            });
        }
        let field = Self {
            label: label.into(),
            dim,
            domain,
            eval_fn,
            deriv_fn,
        };
        field.check_positive_definite_sampled()?;
        Ok(field)
    }

    /// Metric with a constant tensor everywhere (unbounded domain).
    pub fn constant(label: impl Into<String>, rho: SymmetricMatrix) -> Result<Self> {
        let dim = rho.dim();
        let tensor = rho.clone();
        Self::new(
            label,
            dim,
            Domain::unbounded(dim),
            Box::new(move |_x| tensor.clone()),
            Some(Box::new(move |_x| MetricDerivatives::zeros(dim))),
        )
    }

    fn check_positive_definite_sampled(&self) -> Result<()> {
        let boxed = self.domain.sampling_box();
        let mut rng = ChaCha8Rng::seed_from_u64(0x9d2c_5680);
        for _ in 0..PD_SAMPLES {
            let x: Vec<f64> = boxed
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo..=hi))
                .collect();
            if !self.domain.contains(&x) {
                continue;
            }
            let rho = (self.eval_fn)(&x);
            if rho.dim() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: rho.dim(),
                });
            }
            if let Err(minor) = linalg::cholesky(&rho) {
                return Err(Error::NotPositiveDefinite {
                    metric: self.label.clone(),
                    point: x,
                    minor,
                });
            }
        }
        Ok(())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.deriv_fn.is_some()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        self.domain
            .locate(x)
            .map_err(|(axis, bound)| Error::DomainViolation {
                metric: self.label.clone(),
                point: x.to_vec(),
                axis,
                bound,
            })
    }

    /// rho(x). Fails on points outside the open domain.
    pub fn eval(&self, x: &[f64]) -> Result<SymmetricMatrix> {
        self.check_point(x)?;
        let rho = (self.eval_fn)(x);
        debug_assert!(
            linalg::cholesky(&rho).is_ok(),
            "`{}` lost positive definiteness at {:?}",
            self.label,
            x
        );
        Ok(rho)
    }

    /// Squared line element ds^2 = sum rho_ij dx_i dx_j for a displacement.
    pub fn line_element_sq(&self, x: &[f64], dx: &[f64]) -> Result<f64> {
        if dx.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: dx.len(),
            });
        }
        Ok(self.eval(x)?.quadratic_form(dx))
    }

    /// d rho_ij / d x_k: analytic when the field carries derivatives,
    /// second-order finite differences otherwise. A stencil that would leave
    /// the domain shifts one-sided and flags the axis in the result.
    pub fn derivatives(&self, x: &[f64]) -> Result<MetricDerivatives> {
        self.check_point(x)?;
        if let Some(df) = &self.deriv_fn {
            return Ok(df(x));
        }
        self.fd_derivatives(x)
    }

    /// Finite-difference derivatives even when analytic ones exist; the
    /// cross-check between the two is a library invariant.
    pub fn finite_difference_derivatives(&self, x: &[f64]) -> Result<MetricDerivatives> {
        self.check_point(x)?;
        self.fd_derivatives(x)
    }

    fn fd_derivatives(&self, x: &[f64]) -> Result<MetricDerivatives> {
        let n = self.dim;
        let mut out = MetricDerivatives::zeros(n);
        let mut shifted = Vec::new();
        for k in 0..n {
            let h = FD_STEP_REL * self.domain.axis_scale(k);
            let probe = |offset: f64| -> Option<SymmetricMatrix> {
                let mut p = x.to_vec();
                p[k] += offset;
                if self.domain.contains(&p) {
                    Some((self.eval_fn)(&p))
                } else {
                    None
                }
            };
            let plus = probe(h);
            let minus = probe(-h);
            let stencil: Option<(SymmetricMatrix, SymmetricMatrix, SymmetricMatrix, f64, bool)> =
                match (plus, minus) {
                    // Centred: (f(+h) - f(-h)) / 2h, encoded with weights below.
                    (Some(p), Some(m)) => Some((p, m, SymmetricMatrix::zeros(n), 0.0, false)),
                    // Forward: (-3 f(x) + 4 f(x+h) - f(x+2h)) / 2h.
                    (Some(p), None) => probe(2.0 * h).map(|p2| {
                        ((self.eval_fn)(x), p, p2, 1.0, true)
                    }),
                    // Backward: (3 f(x) - 4 f(x-h) + f(x-2h)) / 2h.
                    (None, Some(m)) => probe(-2.0 * h).map(|m2| {
                        ((self.eval_fn)(x), m, m2, -1.0, true)
                    }),
                    (None, None) => None,
                };
            let Some((a, b, c, side, one_sided)) = stencil else {
                return Err(Error::StencilFailed {
                    metric: self.label.clone(),
                    point: x.to_vec(),
                    axis: k,
                });
            };
            if one_sided {
                shifted.push(k);
            }
            for i in 0..n {
                for j in 0..=i {
                    let v = if !one_sided {
                        (a.get(i, j) - b.get(i, j)) / (2.0 * h)
                    } else {
                        side * (-3.0 * a.get(i, j) + 4.0 * b.get(i, j) - c.get(i, j)) / (2.0 * h)
                    };
                    out.set_entry(i, j, k, v);
                }
            }
        }
        out.one_sided_axes = shifted;
        Ok(out)
    }

    /// Connection coefficients
    /// Gamma^i_{ab} = 1/2 rho^{iv} (d_a rho_vb + d_b rho_va - d_v rho_ab).
    ///
    /// The inverse tensor comes from the Cholesky factors; a condition number
    /// above [`CONDITION_LIMIT`] is refused rather than silently amplified.
    pub fn christoffel(&self, x: &[f64]) -> Result<ChristoffelTensor> {
        let rho = self.eval(x)?;
        let n = self.dim;
        let eig = linalg::sym_eigenvalues(&rho);
        let (lo, hi) = (eig[0], eig[n - 1]);
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !cond.is_finite() || cond > CONDITION_LIMIT {
            return Err(Error::IllConditioned {
                metric: self.label.clone(),
                point: x.to_vec(),
                cond,
                limit: CONDITION_LIMIT,
            });
        }
        let l = linalg::cholesky(&rho).map_err(|minor| Error::NotPositiveDefinite {
            metric: self.label.clone(),
            point: x.to_vec(),
            minor,
        })?;
        // rho^{-1} = U^{-1} U^{-T} with U = L^T.
        let uinv = linalg::invert_upper_triangular(&l.transpose());
        let inv = SquareMatrix::from_fn(n, |i, j| {
            (0..n).map(|k| uinv.get(i, k) * uinv.get(j, k)).sum()
        });
        let d = self.derivatives(x)?;
        let mut gamma = ChristoffelTensor::zeros(n);
        for i in 0..n {
            for a in 0..n {
                for b in 0..=a {
                    let mut s = 0.0;
                    for v in 0..n {
                        s += inv.get(i, v) * (d.get(v, b, a) + d.get(v, a, b) - d.get(a, b, v));
                    }
                    gamma.set(i, a, b, 0.5 * s);
                }
            }
        }
        Ok(gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use approx::assert_abs_diff_eq;

    #[test]
    fn domain_bounds_are_open() {
        let d = Domain::new(vec![(Some(0.0), None)]).unwrap();
        assert!(!d.contains(&[0.0]));
        assert!(d.contains(&[1e-12]));
        assert!(!d.contains(&[f64::NAN]));
    }

    #[test]
    fn constant_metric_has_zero_derivatives() {
        let rho = SymmetricMatrix::from_fn(2, |i, j| if i == j { 4.0 } else { 1.0 });
        let m = MetricField::constant("const", rho).unwrap();
        let d = m.derivatives(&[0.3, -0.7]).unwrap();
        assert_eq!(d.max_abs_diff(&MetricDerivatives::zeros(2)), 0.0);
        let gamma = m.christoffel(&[0.3, -0.7]).unwrap();
        for i in 0..2 {
            for a in 0..2 {
                for b in 0..2 {
                    assert_eq!(gamma.get(i, a, b), 0.0);
                }
            }
        }
    }

    #[test]
    fn indefinite_tensor_is_rejected_at_construction() {
        let err = MetricField::new(
            "bad",
            2,
            Domain::unbounded(2),
            Box::new(|_x| SymmetricMatrix::from_fn(2, |i, j| if i == j { -1.0 } else { 0.0 })),
            None,
        )
        .unwrap_err();
        match err {
            Error::NotPositiveDefinite { minor, .. } => assert_eq!(minor, 1),
            other => panic!("expected NotPositiveDefinite, got {other}"),
        }
    }

    #[test]
    fn evaluation_is_deterministic_bitwise() {
        let m = builtin::isotropic_index(0.5, 1.0, 2).unwrap();
        let x = [0.123456789, -0.987654321];
        let a = m.eval(&x).unwrap();
        let b = m.eval(&x).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(a.get(i, j).to_bits(), b.get(i, j).to_bits());
            }
        }
        let da = m.derivatives(&x).unwrap();
        let db = m.derivatives(&x).unwrap();
        assert_eq!(da.max_abs_diff(&db), 0.0);
    }

    #[test]
    fn line_element_accepts_zero_displacement() {
        let m = builtin::euclidean(3).unwrap();
        assert_eq!(m.line_element_sq(&[0.0; 3], &[0.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn out_of_domain_evaluation_names_axis_and_point() {
        let m = builtin::poincare_half_plane().unwrap();
        let err = m.eval(&[0.0, -1.0]).unwrap_err();
        match err {
            Error::DomainViolation { axis, point, .. } => {
                assert_eq!(axis, 1);
                assert_eq!(point, vec![0.0, -1.0]);
            }
            other => panic!("expected DomainViolation, got {other}"),
        }
    }

    #[test]
    fn one_sided_stencil_near_open_bound_is_flagged() {
        // A metric on y > 0 without analytic derivatives: FD near the bound
        // must shift one-sided instead of stepping outside.
        let m = MetricField::new(
            "half-plane-fd",
            2,
            Domain::new(vec![(None, None), (Some(0.0), None)]).unwrap(),
            Box::new(|x: &[f64]| {
                let c = 1.0 / (x[1] * x[1]);
                SymmetricMatrix::scaled_identity(2, c)
            }),
            None,
        )
        .unwrap();
        let near = m.derivatives(&[0.0, 0.5 * FD_STEP_REL]).unwrap();
        assert_eq!(near.one_sided_axes, vec![1]);
        let far = m.derivatives(&[0.0, 1.0]).unwrap();
        assert!(far.one_sided_axes.is_empty());
        // The one-sided stencil is still second order.
        assert_abs_diff_eq!(far.get(0, 0, 1), -2.0, epsilon = 1e-6);
    }

    #[test]
    fn christoffel_rejects_ill_conditioned_tensor() {
        let m = MetricField::new(
            "squashed",
            2,
            Domain::unbounded(2),
            Box::new(|_x| {
                SymmetricMatrix::from_fn(2, |i, j| {
                    if i == j {
                        if i == 0 {
                            1.0
                        } else {
                            1e-13
                        }
                    } else {
                        0.0
                    }
                })
            }),
            Some(Box::new(|_x| MetricDerivatives::zeros(2))),
        )
        .unwrap();
        match m.christoffel(&[0.0, 0.0]).unwrap_err() {
            Error::IllConditioned { cond, .. } => assert!(cond > CONDITION_LIMIT),
            other => panic!("expected IllConditioned, got {other}"),
        }
    }
}
