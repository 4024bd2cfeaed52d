//! Differential frames: pointwise linear coordinates dy = A dx.
//!
//! A frame at a chart point packages the forward map A and its inverse
//! A* = A^-1, so that displacements, derivatives and gradients can be read in
//! the y-coordinates where the metric is momentarily euclidean:
//! A^T A = rho reproduces the line element, and rotating the frame by any
//! orthogonal B leaves every metric quantity unchanged.

use crate::error::{Error, Result};
use crate::linalg::{self, SquareMatrix, SymmetricMatrix};
use crate::metric::MetricField;
use rand::Rng;

/// Orthogonality tolerance for rotation matrices: max |B^T B - I| entry.
pub const ORTHOGONALITY_TOL: f64 = 1e-12;

/// Gradients with squared length at or below this are too degenerate to
/// define an alignment direction.
pub const GRADIENT_FLOOR: f64 = 1e-20;

/// Step used by finite-difference gradients of scalar fields.
pub const SCALAR_FD_STEP: f64 = 1e-5;

/// An orthogonal matrix, validated at construction.
#[derive(Debug, Clone)]
pub struct RotationMatrix {
    m: SquareMatrix,
}

impl RotationMatrix {
    /// Accepts any matrix with B^T B = I to within [`ORTHOGONALITY_TOL`].
    /// Improper rotations (det = -1) are permitted; alignment construction
    /// corrects its own sign where a proper rotation is required.
    pub fn new(m: SquareMatrix) -> Result<Self> {
        let defect = m.orthogonality_defect();
        if !(defect <= ORTHOGONALITY_TOL) {
            return Err(Error::NotOrthogonal {
                defect,
                tol: ORTHOGONALITY_TOL,
            });
        }
        Ok(Self { m })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: SquareMatrix::identity(dim),
        }
    }

    /// Plane rotation in 2D: B = [[cos a, sin a], [-sin a, cos a]].
    pub fn plane_2d(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            m: SquareMatrix::from_rows(&[&[c, s], &[-s, c]]),
        }
    }

    /// Haar-ish random orthogonal matrix from Householder QR of a Gaussian
    /// sample, with the R diagonal sign absorbed so the distribution does not
    /// collapse. Used by randomized invariance checks.
    pub fn random(rng: &mut impl Rng, dim: usize) -> Self {
        // Gram-Schmidt on Gaussian columns is adequate at dim <= 8.
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(dim);
        while cols.len() < dim {
            let mut v: Vec<f64> = (0..dim)
                .map(|_| {
                    // Box-Muller keeps the dependency surface at `Rng`.
                    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    (-2.0 * u1.ln()).sqrt() * u2.cos()
                })
                .collect();
            for c in &cols {
                let proj = linalg::dot(&v, c);
                for (vi, ci) in v.iter_mut().zip(c) {
                    *vi -= proj * ci;
                }
            }
            // Re-orthogonalize once; single-pass Gram-Schmidt loses digits.
            for c in &cols {
                let proj = linalg::dot(&v, c);
                for (vi, ci) in v.iter_mut().zip(c) {
                    *vi -= proj * ci;
                }
            }
            match linalg::unit(&v) {
                Some(u) if linalg::norm(&v) > 1e-8 => cols.push(u),
                _ => continue,
            }
        }
        let m = SquareMatrix::from_fn(dim, |i, j| cols[j][i]);
        debug_assert!(m.orthogonality_defect() <= 1e-12);
        Self { m }
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    pub fn as_matrix(&self) -> &SquareMatrix {
        &self.m
    }
}

/// Scalar field over the chart, with optional analytic gradient.
pub struct ScalarField {
    eval: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    grad: Option<Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>>,
}

impl ScalarField {
    pub fn new(eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Box::new(eval),
            grad: None,
        }
    }

    pub fn with_gradient(
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Box::new(eval),
            grad: Some(Box::new(grad)),
        }
    }

    /// The coordinate function x_i.
    pub fn coordinate(i: usize, dim: usize) -> Self {
        Self::with_gradient(
            move |x: &[f64]| x[i],
            move |_x: &[f64]| {
                let mut g = vec![0.0; dim];
                g[i] = 1.0;
                g
            },
        )
    }

    /// Linear functional c . x.
    pub fn linear(coefs: Vec<f64>) -> Self {
        let c = coefs.clone();
        Self::with_gradient(move |x: &[f64]| linalg::dot(&coefs, x), move |_x| c.clone())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    /// Analytic gradient when present, otherwise central differences with a
    /// step scaled to the coordinate magnitude.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        if let Some(g) = &self.grad {
            return g(x);
        }
        (0..x.len())
            .map(|k| {
                let h = SCALAR_FD_STEP * (1.0 + x[k].abs());
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[k] += h;
                m[k] -= h;
                ((self.eval)(&p) - (self.eval)(&m)) / (2.0 * h)
            })
            .collect()
    }
}

/// Differential frame at a point: dy = A dx with inverse A*.
#[derive(Debug, Clone)]
pub struct FrameField {
    point: Vec<f64>,
    a: SquareMatrix,
    a_star: SquareMatrix,
}

impl FrameField {
    /// Canonical frame of a metric at a point: A is the transpose of the
    /// Cholesky factor of rho = L L^T, so A^T A = rho, and A* is its inverse
    /// by triangular back-substitution.
    pub fn from_metric(m: &MetricField, x: &[f64]) -> Result<Self> {
        let rho = m.eval(x)?;
        let l = linalg::cholesky(&rho).map_err(|minor| Error::NotPositiveDefinite {
            metric: m.label().to_string(),
            point: x.to_vec(),
            minor,
        })?;
        let a = l.transpose();
        let a_star = linalg::invert_upper_triangular(&a);
        Ok(Self {
            point: x.to_vec(),
            a,
            a_star,
        })
    }

    /// Frame from an explicit nonsingular A (A* computed as the exact
    /// pairing); rejected when A^T A admits no factorization.
    pub fn from_matrix(point: Vec<f64>, a: SquareMatrix) -> Result<Self> {
        let gram = a.gram();
        let l = linalg::cholesky(&gram).map_err(|minor| Error::SingularFrame { minor })?;
        // A^-1 = (A^T A)^-1 A^T via the triangular factors; equivalent to
        // back-substitution and keeps the construction allocation-light.
        let uinv = linalg::invert_upper_triangular(&l.transpose());
        let gram_inv = SquareMatrix::from_fn(a.dim(), |i, j| {
            (0..a.dim()).map(|k| uinv.get(i, k) * uinv.get(j, k)).sum()
        });
        let a_star = gram_inv.mul(&a.transpose());
        Ok(Self { point, a, a_star })
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    /// Forward matrix: rows express dy_i in chart displacements.
    pub fn a(&self) -> &SquareMatrix {
        &self.a
    }

    /// Inverse matrix: dx = A* dy.
    pub fn a_star(&self) -> &SquareMatrix {
        &self.a_star
    }

    /// The metric this frame represents: rho = A^T A.
    pub fn metric(&self) -> SymmetricMatrix {
        self.a.gram()
    }

    /// Chart displacement -> frame displacement.
    pub fn to_frame(&self, dx: &[f64]) -> Vec<f64> {
        self.a.mat_vec(dx)
    }

    /// Frame displacement -> chart displacement.
    pub fn to_chart(&self, dy: &[f64]) -> Vec<f64> {
        self.a_star.mat_vec(dy)
    }

    /// Applies an orthogonal rotation: A' = B A, A*' = A* B^T.
    /// The represented metric is unchanged.
    pub fn rotate(&self, b: &RotationMatrix) -> Result<Self> {
        if b.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: b.dim(),
            });
        }
        Ok(Self {
            point: self.point.clone(),
            a: b.as_matrix().mul(&self.a),
            a_star: self.a_star.mul(&b.as_matrix().transpose()),
        })
    }

    /// Derivative of `f` along the i-th frame coordinate:
    /// Df/Dy_i = sum_j (df/dx_j) A*_{ji}.
    pub fn directional_derivative(&self, f: &ScalarField, i: usize) -> f64 {
        let grad = f.gradient(&self.point);
        (0..self.dim()).map(|j| grad[j] * self.a_star.get(j, i)).sum()
    }

    /// All frame-coordinate derivatives of `f` as a vector: (A*)^T grad f.
    pub fn frame_gradient(&self, f: &ScalarField) -> Vec<f64> {
        let grad = f.gradient(&self.point);
        self.gradient_to_frame(&grad)
    }

    /// Chart gradient components -> frame gradient components, (A*)^T g.
    /// Displacements transform with [`Self::to_frame`]; gradients with this.
    pub fn gradient_to_frame(&self, grad_x: &[f64]) -> Vec<f64> {
        self.a_star.transpose().mat_vec(grad_x)
    }

    /// Sum of squared frame derivatives; invariant under frame rotation.
    pub fn gradient_square(&self, f: &ScalarField) -> f64 {
        let g = self.frame_gradient(f);
        linalg::dot(&g, &g)
    }

    /// Rotates the frame so the first coordinate points along the gradient
    /// of `f`: afterwards Df/Dy_1 = sqrt(gradient_square) and the other
    /// frame derivatives vanish. Returns the rotated frame and the rotation.
    ///
    /// Built from the Householder reflection mapping the frame gradient to
    /// +|g| e_1, sign-corrected to a proper rotation when dim > 1. An input
    /// already aligned returns the identity.
    pub fn align_to_gradient(&self, f: &ScalarField) -> Result<(Self, RotationMatrix)> {
        let g = self.frame_gradient(f);
        let square = linalg::dot(&g, &g);
        if !(square > GRADIENT_FLOOR) {
            return Err(Error::DegenerateGradient { square });
        }
        let n = self.dim();
        let gnorm = square.sqrt();
        let mut v = g.clone();
        v[0] -= gnorm;
        let vnorm2 = linalg::dot(&v, &v);
        // Near-aligned input: the reflection degenerates toward identity and
        // v loses digits to cancellation; snap to the identity outright.
        if vnorm2 <= (1e-8 * gnorm) * (1e-8 * gnorm) {
            return Ok((self.clone(), RotationMatrix::identity(n)));
        }
        let mut h = SquareMatrix::from_fn(n, |i, j| {
            let id = if i == j { 1.0 } else { 0.0 };
            id - 2.0 * v[i] * v[j] / vnorm2
        });
        // The reflection has det -1; flipping the last row restores a proper
        // rotation without disturbing H g = |g| e_1 (its last component is 0).
        if n > 1 {
            h.scale_row(n - 1, -1.0);
        }
        let b = RotationMatrix::new(h)?;
        Ok((self.rotate(&b)?, b))
    }
}

/// rho = A^T A for an explicit frame matrix; fails when A is singular.
pub fn metric_from_frame(a: &SquareMatrix) -> Result<SymmetricMatrix> {
    let gram = a.gram();
    linalg::cholesky(&gram).map_err(|minor| Error::SingularFrame { minor })?;
    Ok(gram)
}
