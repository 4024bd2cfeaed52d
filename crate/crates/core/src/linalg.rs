//! Small dense linear algebra for chart dimensions up to 8.
//!
//! Everything here is sized for metric tensors and frames in low-dimensional
//! charts, so the implementations favour explicitness over blocking or SIMD:
//! packed symmetric storage, unpivoted Cholesky (the factor itself is part of
//! the frame convention), triangular inversion by back-substitution, and a
//! cyclic Jacobi eigensolver for condition estimates.

/// Symmetric matrix with packed lower-triangular storage.
///
/// `get(i, j) == get(j, i)` holds by construction; there is no way to store
/// an asymmetric value.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    // Row-major lower triangle: (i, j) with i >= j lives at i*(i+1)/2 + j.
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, c);
        }
        m
    }

    /// Builds from `f(i, j)`, evaluated once per unordered index pair.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        hi * (hi + 1) / 2 + lo
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// Quadratic form u^T M u.
    pub fn quadratic_form(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.dim);
        let mut acc = 0.0;
        for i in 0..self.dim {
            acc += self.get(i, i) * u[i] * u[i];
            for j in 0..i {
                acc += 2.0 * self.get(i, j) * u[i] * u[j];
            }
        }
        acc
    }

    /// Bilinear form u^T M v.
    pub fn bilinear_form(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += self.get(i, j) * u[i] * v[j];
            }
        }
        acc
    }

    pub fn to_square(&self) -> SquareMatrix {
        SquareMatrix::from_fn(self.dim, |i, j| self.get(i, j))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds from explicit rows; panics on ragged input (test/setup helper).
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        assert!(rows.iter().all(|r| r.len() == dim), "ragged rows");
        Self::from_fn(dim, |i, j| rows[i][j])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self.get(j, i))
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut out = Self::zeros(self.dim);
        for i in 0..self.dim {
            for k in 0..self.dim {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..self.dim {
                    out.data[i * self.dim + j] += a * rhs.get(k, j);
                }
            }
        }
        out
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// A^T A as a symmetric matrix (exactly symmetric storage).
    pub fn gram(&self) -> SymmetricMatrix {
        SymmetricMatrix::from_fn(self.dim, |i, j| {
            (0..self.dim).map(|k| self.get(k, i) * self.get(k, j)).sum()
        })
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Max |A^T A - I| entry: how far the matrix is from orthogonal.
    pub fn orthogonality_defect(&self) -> f64 {
        let g = self.gram();
        let mut dev: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..=i {
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((g.get(i, j) - target).abs());
            }
        }
        dev
    }

    pub fn scale_row(&mut self, i: usize, c: f64) {
        for j in 0..self.dim {
            let v = self.get(i, j);
            self.set(i, j, c * v);
        }
    }
}

/// Cholesky factorization M = L L^T, L lower triangular with positive
/// diagonal. Fails with the 1-based index of the first non-positive leading
/// minor, which is exactly the diagnostic a non-positive-definite metric
/// should carry.
pub fn cholesky(m: &SymmetricMatrix) -> Result<SquareMatrix, usize> {
    let n = m.dim();
    let mut l = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return Err(i + 1);
                }
                l.set(i, i, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Inverse of an upper-triangular matrix by back-substitution.
/// The diagonal must be nonzero (guaranteed when the input came from a
/// successful Cholesky factorization).
pub fn invert_upper_triangular(u: &SquareMatrix) -> SquareMatrix {
    let n = u.dim();
    let mut inv = SquareMatrix::zeros(n);
    for i in (0..n).rev() {
        inv.set(i, i, 1.0 / u.get(i, i));
        for j in (i + 1..n).rev() {
            let mut sum = 0.0;
            for k in i + 1..=j {
                sum += u.get(i, k) * inv.get(k, j);
            }
            inv.set(i, j, -sum / u.get(i, i));
        }
    }
    inv
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn sym_eigenvalues(m: &SymmetricMatrix) -> Vec<f64> {
    let n = m.dim();
    let mut a = m.to_square();
    // Off-diagonal Frobenius mass; sweeps stop once it is negligible.
    let off = |a: &SquareMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a.get(i, j) * a.get(i, j);
                }
            }
        }
        s
    };
    let scale: f64 = (0..n).map(|i| m.get(i, i).abs()).fold(1e-300, f64::max);
    let tol = (1e-15 * scale) * (1e-15 * scale) * n as f64 * n as f64;
    for _sweep in 0..64 {
        if off(&a) <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq.abs() <= 1e-18 * scale {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Unit vector in the direction of `a`, or `None` for (near-)zero input.
pub fn unit(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    if n <= 0.0 || !n.is_finite() {
        return None;
    }
    Some(a.iter().map(|x| x / n).collect())
}

/// Angle between two nonzero vectors, in radians.
/// Angle between two directions. The half-angle form stays accurate for
/// nearly parallel and nearly antiparallel inputs, where acos of the dot
/// product loses half its digits.
pub fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let mut diff_sq = 0.0;
    let mut sum_sq = 0.0;
    for (ai, bi) in a.iter().zip(b) {
        let (ua, ub) = (ai / na, bi / nb);
        diff_sq += (ua - ub) * (ua - ub);
        sum_sq += (ua + ub) * (ua + ub);
    }
    2.0 * diff_sq.sqrt().atan2(sum_sq.sqrt())
}
