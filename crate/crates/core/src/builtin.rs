//! Built-in metric catalogue.
//!
//! Five fields selectable by name plus a smoothed-interface constructor used
//! for refraction experiments. All carry analytic derivatives except
//! `grid_index`, which differentiates its interpolant by finite differences.

use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::metric::{Domain, MetricDerivatives, MetricField};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Charts beyond this dimension are out of scope.
pub const MAX_DIM: usize = 8;

/// Guard strip excluded around the sphere chart's coordinate poles.
pub const DEFAULT_POLE_GUARD: f64 = 1e-6;

/// Grid node values below this would make the interpolated tensor nearly
/// singular; the loader refuses them.
pub const GRID_MIN_VALUE: f64 = 0.05;

/// Named parameters for [`builtin_metric`]: numeric keys plus the grid file
/// path for `grid_index`.
#[derive(Debug, Clone, Default)]
pub struct MetricParams {
    pub numbers: BTreeMap<String, f64>,
    pub grid_file: Option<PathBuf>,
}

impl MetricParams {
    fn num(&self, key: &str) -> Option<f64> {
        self.numbers.get(key).copied()
    }

    fn check_keys(&self, metric: &str, allowed: &[&str]) -> Result<()> {
        for key in self.numbers.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::InvalidParam {
                    name: key.clone(),
                    reason: format!("`{metric}` accepts only: {}", allowed.join(", ")),
                });
            }
        }
        if self.grid_file.is_some() && metric != "grid_index" {
            return Err(Error::InvalidParam {
                name: "grid_file".into(),
                reason: format!("`{metric}` takes no grid file"),
            });
        }
        Ok(())
    }
}

/// Constructs a built-in metric by name.
pub fn builtin_metric(name: &str, params: &MetricParams) -> Result<MetricField> {
    match name {
        "euclidean" => {
            params.check_keys(name, &["dim"])?;
            euclidean(dim_param(params.num("dim"), 2)?)
        }
        "sphere" => {
            params.check_keys(name, &["eps_pole"])?;
            sphere(params.num("eps_pole").unwrap_or(DEFAULT_POLE_GUARD))
        }
        "poincare_half_plane" => {
            params.check_keys(name, &[])?;
            poincare_half_plane()
        }
        "isotropic_index" => {
            params.check_keys(name, &["amplitude", "width", "dim"])?;
            let amplitude = params.num("amplitude").ok_or_else(|| Error::MissingParam {
                metric: name.into(),
                key: "amplitude".into(),
            })?;
            let width = params.num("width").ok_or_else(|| Error::MissingParam {
                metric: name.into(),
                key: "width".into(),
            })?;
            isotropic_index(amplitude, width, dim_param(params.num("dim"), 2)?)
        }
        "grid_index" => {
            params.check_keys(name, &[])?;
            let path = params.grid_file.as_ref().ok_or_else(|| Error::MissingParam {
                metric: name.into(),
                key: "grid_file".into(),
            })?;
            grid_index(path)
        }
        other => Err(Error::UnknownMetric { name: other.into() }),
    }
}

fn dim_param(value: Option<f64>, default: usize) -> Result<usize> {
    let Some(v) = value else {
        return Ok(default);
    };
    let dim = v as usize;
    if dim as f64 != v || dim == 0 || dim > MAX_DIM {
        return Err(Error::InvalidParam {
            name: "dim".into(),
            reason: format!("expected an integer in 1..={MAX_DIM}, got {v}"),
        });
    }
    Ok(dim)
}

/// Flat metric rho = I on all of R^dim.
pub fn euclidean(dim: usize) -> Result<MetricField> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::InvalidParam {
            name: "dim".into(),
            reason: format!("expected 1..={MAX_DIM}, got {dim}"),
        });
    }
    MetricField::new(
        "euclidean",
        dim,
        Domain::unbounded(dim),
        Box::new(move |_x| SymmetricMatrix::identity(dim)),
        Some(Box::new(move |_x| MetricDerivatives::zeros(dim))),
    )
}

/// Unit sphere in colatitude/longitude coordinates (theta, phi):
/// rho = diag(1, sin^2 theta). The chart keeps a guard strip of `eps_pole`
/// away from both poles, where the tensor degenerates.
pub fn sphere(eps_pole: f64) -> Result<MetricField> {
    if !(eps_pole > 0.0 && eps_pole < 1.0) {
        return Err(Error::InvalidParam {
            name: "eps_pole".into(),
            reason: format!("expected a small positive guard, got {eps_pole}"),
        });
    }
    let domain = Domain::new(vec![
        (Some(eps_pole), Some(std::f64::consts::PI - eps_pole)),
        (None, None),
    ])?;
    MetricField::new(
        "sphere",
        2,
        domain,
        Box::new(|x: &[f64]| {
            let s = x[0].sin();
            let mut rho = SymmetricMatrix::identity(2);
            rho.set(1, 1, s * s);
            rho
        }),
        Some(Box::new(|x: &[f64]| {
            let mut d = MetricDerivatives::zeros(2);
            let two_sc = (2.0 * x[0]).sin();
            d.set_entry(1, 1, 0, two_sc);
            d
        })),
    )
}

/// Hyperbolic half-plane: rho = diag(1/y^2, 1/y^2) on y > 0.
pub fn poincare_half_plane() -> Result<MetricField> {
    let domain = Domain::new(vec![(None, None), (Some(0.0), None)])?;
    MetricField::new(
        "poincare_half_plane",
        2,
        domain,
        Box::new(|x: &[f64]| {
            let c = 1.0 / (x[1] * x[1]);
            SymmetricMatrix::scaled_identity(2, c)
        }),
        Some(Box::new(|x: &[f64]| {
            let mut d = MetricDerivatives::zeros(2);
            let dv = -2.0 / (x[1] * x[1] * x[1]);
            d.set_entry(0, 0, 1, dv);
            d.set_entry(1, 1, 1, dv);
            d
        })),
    )
}

/// Gaussian-bump refractive index n(x) = 1 + A exp(-|x|^2 / w^2) with
/// rho = n^2 I. `amplitude` must stay above -1 so n remains positive.
pub fn isotropic_index(amplitude: f64, width: f64, dim: usize) -> Result<MetricField> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::InvalidParam {
            name: "dim".into(),
            reason: format!("expected 1..={MAX_DIM}, got {dim}"),
        });
    }
    if !(amplitude > -1.0) || !amplitude.is_finite() {
        return Err(Error::InvalidParam {
            name: "amplitude".into(),
            reason: format!("index 1 + A exp(...) must stay positive; got A = {amplitude}"),
        });
    }
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::InvalidParam {
            name: "width".into(),
            reason: format!("expected a positive width, got {width}"),
        });
    }
    let w2 = width * width;
    let index = move |x: &[f64]| -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        1.0 + amplitude * (-r2 / w2).exp()
    };
    MetricField::new(
        "isotropic_index",
        dim,
        Domain::unbounded(dim),
        Box::new(move |x: &[f64]| {
            let n = index(x);
            SymmetricMatrix::scaled_identity(dim, n * n)
        }),
        Some(Box::new(move |x: &[f64]| {
            // d rho_ii / d x_k = 2 n dn/dx_k, dn/dx_k = (n - 1)(-2 x_k / w^2).
            let n = index(x);
            let mut d = MetricDerivatives::zeros(dim);
            for k in 0..dim {
                let dn = (n - 1.0) * (-2.0 * x[k] / w2);
                for i in 0..dim {
                    d.set_entry(i, i, k, 2.0 * n * dn);
                }
            }
            d
        })),
    )
}

/// Isotropic index field sampled on a rectilinear grid, multilinearly
/// interpolated between nodes; rho = n(x)^2 I on the open grid box.
pub fn grid_index(path: &Path) -> Result<MetricField> {
    let grid = GridField::load(path)?;
    grid_index_from(grid)
}

/// Same as [`grid_index`] but from an already-parsed grid.
pub fn grid_index_from(grid: GridField) -> Result<MetricField> {
    let dim = grid.dim();
    let domain = Domain::new(
        grid.bounds
            .iter()
            .map(|&(lo, hi)| (Some(lo), Some(hi)))
            .collect(),
    )?;
    MetricField::new(
        "grid_index",
        dim,
        domain,
        Box::new(move |x: &[f64]| {
            let n = grid.value(x);
            SymmetricMatrix::scaled_identity(dim, n * n)
        }),
        // No analytic derivatives: the interpolant is differentiated by
        // finite differences like any opaque field.
        None,
    )
}

/// Two homogeneous half-spaces n1 (y < 0) and n2 (y > 0) joined by a tanh
/// profile of the given width: n(y) = n1 + (n2 - n1)(1 + tanh(y/width))/2.
/// Smooth stand-in for a refracting interface along y = 0.
pub fn graded_interface(n1: f64, n2: f64, width: f64) -> Result<MetricField> {
    for (name, v) in [("n1", n1), ("n2", n2), ("width", width)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParam {
                name: name.into(),
                reason: format!("expected a positive value, got {v}"),
            });
        }
    }
    let index = move |y: f64| n1 + (n2 - n1) * (1.0 + (y / width).tanh()) / 2.0;
    MetricField::new(
        "graded_interface",
        2,
        Domain::unbounded(2),
        Box::new(move |x: &[f64]| {
            let n = index(x[1]);
            SymmetricMatrix::scaled_identity(2, n * n)
        }),
        Some(Box::new(move |x: &[f64]| {
            let n = index(x[1]);
            let cosh = (x[1] / width).cosh();
            let dn = (n2 - n1) / (2.0 * width * cosh * cosh);
            let mut d = MetricDerivatives::zeros(2);
            d.set_entry(0, 0, 1, 2.0 * n * dn);
            d.set_entry(1, 1, 1, 2.0 * n * dn);
            d
        })),
    )
}

/// Rectilinear sample grid of a scalar index field.
///
/// File format (whitespace separated, `#` starts a comment line):
///
/// ```text
/// GRID <dim> <n_1> ... <n_dim> <min_1> <max_1> ... <min_dim> <max_dim>
/// <value> <value> ...          # n_1 * ... * n_dim values, row-major,
///                              # last axis fastest
/// ```
#[derive(Debug, Clone)]
pub struct GridField {
    shape: Vec<usize>,
    bounds: Vec<(f64, f64)>,
    values: Vec<f64>,
}

impl GridField {
    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let err = |line: usize, reason: String| Error::GridFormat {
            path: path.to_string(),
            line,
            reason,
        };
        // Token stream with 1-based line numbers for diagnostics.
        let mut tokens = text
            .lines()
            .enumerate()
            .flat_map(|(i, line)| {
                let content = line.split('#').next().unwrap_or("");
                content
                    .split_whitespace()
                    .map(move |t| (i + 1, t))
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
            .into_iter();

        let (line, magic) = tokens
            .next()
            .ok_or_else(|| err(1, "empty file".into()))?;
        if magic != "GRID" {
            return Err(err(line, format!("expected header `GRID`, found `{magic}`")));
        }
        let next_usize = |what: &str, tokens: &mut dyn Iterator<Item = (usize, &str)>| {
            let (line, tok) = tokens
                .next()
                .ok_or_else(|| err(0, format!("missing {what}")))?;
            tok.parse::<usize>()
                .map_err(|_| err(line, format!("{what}: expected an integer, found `{tok}`")))
                .map(|v| (line, v))
        };
        let next_f64 = |what: &str, tokens: &mut dyn Iterator<Item = (usize, &str)>| {
            let (line, tok) = tokens
                .next()
                .ok_or_else(|| err(0, format!("missing {what}")))?;
            tok.parse::<f64>()
                .map_err(|_| err(line, format!("{what}: expected a number, found `{tok}`")))
                .map(|v| (line, v))
        };

        let (line, dim) = next_usize("dimension", &mut tokens)?;
        if dim == 0 || dim > MAX_DIM {
            return Err(err(line, format!("dimension must be 1..={MAX_DIM}, got {dim}")));
        }
        let mut shape = Vec::with_capacity(dim);
        for a in 0..dim {
            let (line, n) = next_usize(&format!("node count for axis {a}"), &mut tokens)?;
            if n < 2 {
                return Err(err(line, format!("axis {a} needs >= 2 nodes, got {n}")));
            }
            shape.push(n);
        }
        let mut bounds = Vec::with_capacity(dim);
        for a in 0..dim {
            let (_, lo) = next_f64(&format!("lower bound for axis {a}"), &mut tokens)?;
            let (line, hi) = next_f64(&format!("upper bound for axis {a}"), &mut tokens)?;
            if !(lo < hi) {
                return Err(err(line, format!("axis {a}: bounds {lo} {hi} are not increasing")));
            }
            bounds.push((lo, hi));
        }
        let count: usize = shape.iter().product();
        let mut values = Vec::with_capacity(count);
        for idx in 0..count {
            let (line, v) = next_f64(&format!("value {idx}"), &mut tokens)?;
            if !(v >= GRID_MIN_VALUE) || !v.is_finite() {
                return Err(err(
                    line,
                    format!("value {v} below the minimum {GRID_MIN_VALUE}"),
                ));
            }
            values.push(v);
        }
        if let Some((line, tok)) = tokens.next() {
            return Err(err(
                line,
                format!("trailing data after {count} values: `{tok}`"),
            ));
        }
        Ok(Self {
            shape,
            bounds,
            values,
        })
    }

    /// Multilinear interpolation at a point inside the grid box.
    pub fn value(&self, x: &[f64]) -> f64 {
        let dim = self.dim();
        debug_assert_eq!(x.len(), dim);
        // Per-axis cell index and fractional position.
        let mut cell = Vec::with_capacity(dim);
        let mut frac = Vec::with_capacity(dim);
        for a in 0..dim {
            let (lo, hi) = self.bounds[a];
            let step = (hi - lo) / (self.shape[a] - 1) as f64;
            let t = (x[a] - lo) / step;
            let i = (t.floor() as isize).clamp(0, self.shape[a] as isize - 2) as usize;
            cell.push(i);
            frac.push((t - i as f64).clamp(0.0, 1.0));
        }
        // Row-major strides, last axis fastest.
        let mut strides = vec![1usize; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * self.shape[a + 1];
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut idx = 0usize;
            for a in 0..dim {
                let bit = (corner >> a) & 1;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                idx += (cell[a] + bit) * strides[a];
            }
            acc += w * self.values[idx];
        }
        acc
    }
}
