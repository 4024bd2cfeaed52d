//! Geodesic tracing in two interchangeable formulations.
//!
//! `AlphaForm` advances in chart arclength r and bends the unit tangent
//! toward the transverse gradient of the local stretch factor
//! alpha(x, u) = sqrt(sum rho_ij u_i u_j):
//!
//! ```text
//! dx/dr = u,    du/dr = (g - (g.u) u) / alpha,    g = grad_x alpha
//! ```
//!
//! `Christoffel` advances in metric arclength s with the classical
//! connection-coefficient equation d2x/ds2 = -Gamma(dx/ds, dx/ds). For
//! isotropic metrics the two trace the same curves to integration accuracy;
//! for anisotropic metrics their discrepancy is an experiment output, not an
//! assertion (see [`convergence_study`]).

use crate::error::{Error, Result};
use crate::linalg::{self};
use crate::metric::MetricField;
use std::fmt;

/// Tangents are accepted as unit when their euclidean norm is this close to 1.
pub const UNIT_TOL: f64 = 1e-9;

/// Deviations at or below this are reported as exact agreement.
pub const EXACT_FLOOR: f64 = 1e-12;

/// Successive-deviation ratio above which a convergence study reports a
/// plateau instead of an order.
pub const PLATEAU_RATIO: f64 = 0.8;

/// Hard per-trace step budget; guards runaway limits, not ordinary use.
const MAX_STEPS: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    /// Gradient-of-stretch form, integrated in chart arclength r.
    AlphaForm,
    /// Classical connection form, integrated in metric arclength s.
    Christoffel,
}

impl Formulation {
    pub fn name(self) -> &'static str {
        match self {
            Formulation::AlphaForm => "alpha_form",
            Formulation::Christoffel => "christoffel",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Formulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha_form" => Ok(Formulation::AlphaForm),
            "christoffel" => Ok(Formulation::Christoffel),
            other => Err(Error::InvalidParam {
                name: "formulation".into(),
                reason: format!("expected alpha_form or christoffel, got `{other}`"),
            }),
        }
    }
}

/// Stop condition for a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceLimit {
    /// Total metric arclength.
    MaxS(f64),
    /// Total chart arclength.
    MaxR(f64),
}

impl TraceLimit {
    fn target(self) -> f64 {
        match self {
            TraceLimit::MaxS(v) | TraceLimit::MaxR(v) => v,
        }
    }
}

/// Instantaneous state of a traced ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RayState {
    /// Chart position.
    pub x: Vec<f64>,
    /// Unit tangent (euclidean normalization in chart coordinates).
    pub u: Vec<f64>,
    /// Accumulated chart arclength.
    pub r: f64,
    /// Accumulated metric arclength.
    pub s: f64,
}

impl RayState {
    pub fn new(x: Vec<f64>, u: &[f64]) -> Result<Self> {
        let u = linalg::unit(u).ok_or(Error::ZeroDirection)?;
        Ok(Self { x, u, r: 0.0, s: 0.0 })
    }
}

/// Local stretch factor alpha = dS/dr = sqrt(sum rho_ij u_i u_j) for a unit
/// chart direction u. For isotropic metrics this is the refractive index.
pub fn alpha(m: &MetricField, x: &[f64], u: &[f64]) -> Result<f64> {
    let norm = linalg::norm(u);
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::NonUnitDirection { norm, tol: UNIT_TOL });
    }
    Ok(m.eval(x)?.quadratic_form(u).sqrt())
}

/// Spatial gradient of alpha with the direction held fixed:
/// (grad alpha)_k = (1 / 2 alpha) sum_ij (d rho_ij / d x_k) u_i u_j.
pub fn alpha_gradient(m: &MetricField, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let a = alpha(m, x, u)?;
    let d = m.derivatives(x)?;
    let n = m.dim();
    let mut g = vec![0.0; n];
    for k in 0..n {
        let mut s = 0.0;
        for i in 0..n {
            s += d.get(i, i, k) * u[i] * u[i];
            for j in 0..i {
                s += 2.0 * d.get(i, j, k) * u[i] * u[j];
            }
        }
        g[k] = s / (2.0 * a);
    }
    Ok(g)
}

// State layout for the integrators: [x_0..x_n, v_0..v_n, w] where v is the
// evolving tangent (chart-unit for the alpha form, metric-unit velocity for
// the Christoffel form) and w accumulates the companion parameter (S or r).
// Folding w into the RK4 state keeps it at the integrator's own order; the
// RK4 update of a pure quadrature component is precisely Simpson's rule over
// the step with the two midpoint stages averaged.

fn rk4_step(
    z: &[f64],
    h: f64,
    rhs: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let at = |base: &[f64], k: &[f64], c: f64| -> Vec<f64> {
        base.iter().zip(k).map(|(b, ki)| b + c * ki).collect()
    };
    let k1 = rhs(z)?;
    let k2 = rhs(&at(z, &k1, 0.5 * h))?;
    let k3 = rhs(&at(z, &k2, 0.5 * h))?;
    let k4 = rhs(&at(z, &k3, h))?;
    Ok(z.iter()
        .enumerate()
        .map(|(i, zi)| zi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn alpha_form_rhs(m: &MetricField, z: &[f64]) -> Result<Vec<f64>> {
    let n = m.dim();
    let x = &z[..n];
    let u = linalg::unit(&z[n..2 * n]).ok_or(Error::ZeroDirection)?;
    let a = m.eval(x)?.quadratic_form(&u).sqrt();
    let d = m.derivatives(x)?;
    let mut g = vec![0.0; n];
    for k in 0..n {
        let mut s = 0.0;
        for i in 0..n {
            s += d.get(i, i, k) * u[i] * u[i];
            for j in 0..i {
                s += 2.0 * d.get(i, j, k) * u[i] * u[j];
            }
        }
        g[k] = s / (2.0 * a);
    }
    let gu = linalg::dot(&g, &u);
    let mut dz = Vec::with_capacity(2 * n + 1);
    dz.extend_from_slice(&u);
    for k in 0..n {
        dz.push((g[k] - gu * u[k]) / a);
    }
    dz.push(a); // dS/dr
    Ok(dz)
}

fn christoffel_rhs(m: &MetricField, z: &[f64]) -> Result<Vec<f64>> {
    let n = m.dim();
    let x = &z[..n];
    let v = &z[n..2 * n];
    let gamma = m.christoffel(x)?;
    let acc = gamma.acceleration(v);
    let mut dz = Vec::with_capacity(2 * n + 1);
    dz.extend_from_slice(v);
    dz.extend_from_slice(&acc);
    dz.push(linalg::norm(v)); // dr/ds = |dx/ds|
    Ok(dz)
}

fn pack(x: &[f64], v: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(2 * x.len() + 1);
    z.extend_from_slice(x);
    z.extend_from_slice(v);
    z.push(0.0);
    z
}

/// One RK4 step of the gradient-of-stretch form. Advances r by exactly `h`;
/// S grows by the step's integral of alpha. The tangent is renormalized to
/// unit length after the step.
pub fn step_alpha_form(m: &MetricField, state: &RayState, h: f64) -> Result<RayState> {
    if !(h > 0.0) {
        return Err(Error::InvalidStep { h });
    }
    let n = m.dim();
    let z = pack(&state.x, &state.u);
    let z1 = rk4_step(&z, h, &|zz| alpha_form_rhs(m, zz))?;
    let x = z1[..n].to_vec();
    let u = linalg::unit(&z1[n..2 * n]).ok_or(Error::ZeroDirection)?;
    // The end point must itself be evaluable; a step that lands outside the
    // domain truncates here rather than at the next use.
    m.eval(&x)?;
    Ok(RayState {
        x,
        u,
        r: state.r + h,
        s: state.s + z1[2 * n],
    })
}

/// One RK4 step of the connection form in metric arclength. Advances S by
/// exactly `h`; r grows by the step's integral of 1/alpha. The metric-unit
/// velocity is renormalized after the step.
pub fn step_christoffel(m: &MetricField, state: &RayState, h: f64) -> Result<RayState> {
    if !(h > 0.0) {
        return Err(Error::InvalidStep { h });
    }
    let n = m.dim();
    let a0 = alpha(m, &state.x, &state.u)?;
    let v0: Vec<f64> = state.u.iter().map(|ui| ui / a0).collect();
    let z = pack(&state.x, &v0);
    let z1 = rk4_step(&z, h, &|zz| christoffel_rhs(m, zz))?;
    let x = z1[..n].to_vec();
    let mut v = z1[n..2 * n].to_vec();
    let speed_sq = m.eval(&x)?.quadratic_form(&v);
    if !(speed_sq > 0.0) {
        return Err(Error::ZeroDirection);
    }
    let q = speed_sq.sqrt();
    for vi in &mut v {
        *vi /= q;
    }
    let u = linalg::unit(&v).ok_or(Error::ZeroDirection)?;
    Ok(RayState {
        x,
        u,
        r: state.r + z1[2 * n],
        s: state.s + h,
    })
}

/// A sampled geodesic. `samples[0]` is the start state; the integration
/// parameter (r for the alpha form, S for the Christoffel form) advances by
/// the fixed step except for one shortened landing step onto the limit.
#[derive(Debug, Clone)]
pub struct GeodesicTrace {
    pub metric_label: String,
    pub formulation: Formulation,
    pub h: f64,
    pub samples: Vec<RayState>,
    /// alpha at each sample, cached for resummation and interpolation.
    pub alphas: Vec<f64>,
    /// Exit point when the trace left the metric domain mid-step; the last
    /// sample is the final state still inside.
    pub truncated: Option<Vec<f64>>,
}

impl GeodesicTrace {
    pub fn dim(&self) -> usize {
        self.samples[0].x.len()
    }

    pub fn start(&self) -> &RayState {
        &self.samples[0]
    }

    pub fn end(&self) -> &RayState {
        self.samples.last().expect("traces hold >= 1 sample")
    }

    pub fn s_end(&self) -> f64 {
        self.end().s
    }

    pub fn r_end(&self) -> f64 {
        self.end().r
    }

    /// Index k and fraction t with s between samples k and k+1. Queries
    /// within the landing tolerance past the final sample clamp to it, so a
    /// limit reached by a shortened last step stays addressable at the
    /// nominal limit value.
    fn bracket_s(&self, s: f64) -> Option<(usize, f64)> {
        let slack = 1e-9 * self.s_end().max(1.0);
        if !(s >= 0.0) || s > self.s_end() + slack {
            return None;
        }
        let k = self
            .samples
            .partition_point(|st| st.s <= s)
            .saturating_sub(1)
            .min(self.samples.len().saturating_sub(2));
        if self.samples.len() == 1 {
            return if s == 0.0 { Some((0, 0.0)) } else { None };
        }
        let s0 = self.samples[k].s;
        let s1 = self.samples[k + 1].s;
        let ds = s1 - s0;
        let t = if ds > 0.0 { ((s - s0) / ds).clamp(0.0, 1.0) } else { 0.0 };
        Some((k, t))
    }

    /// Linear interpolation at metric arclength s: (x, u, r).
    /// The wavefront checks build level sets from this.
    pub fn interp_linear_s(&self, s: f64) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let (k, t) = self.bracket_s(s)?;
        if self.samples.len() == 1 {
            let st = &self.samples[0];
            return Some((st.x.clone(), st.u.clone(), st.r));
        }
        let (a, b) = (&self.samples[k], &self.samples[k + 1]);
        let lerp = |p: &[f64], q: &[f64]| -> Vec<f64> {
            p.iter().zip(q).map(|(pi, qi)| pi + t * (qi - pi)).collect()
        };
        let x = lerp(&a.x, &b.x);
        let u = linalg::unit(&lerp(&a.u, &b.u))?;
        let r = a.r + t * (b.r - a.r);
        Some((x, u, r))
    }

    /// Linear interpolation of the stored stretch factor at arclength s.
    pub fn interp_alpha_s(&self, s: f64) -> Option<f64> {
        let (k, t) = self.bracket_s(s)?;
        if self.samples.len() == 1 {
            return Some(self.alphas[0]);
        }
        Some(self.alphas[k] * (1.0 - t) + self.alphas[k + 1] * t)
    }

    /// Cubic Hermite interpolation at metric arclength s, using the
    /// ODE-supplied node derivatives dx/dS = u / alpha. Keeps resampling at
    /// the integrator's own order; tangents are the curve derivative,
    /// renormalized.
    pub fn interp_hermite_s(&self, s: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let (k, t) = self.bracket_s(s)?;
        if self.samples.len() == 1 {
            return Some((self.samples[0].x.clone(), self.samples[0].u.clone()));
        }
        let (a, b) = (&self.samples[k], &self.samples[k + 1]);
        let ds = b.s - a.s;
        if ds <= 0.0 {
            return Some((a.x.clone(), a.u.clone()));
        }
        let (aa, ab) = (self.alphas[k], self.alphas[k + 1]);
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let d00 = 6.0 * t2 - 6.0 * t;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = -6.0 * t2 + 6.0 * t;
        let d11 = 3.0 * t2 - 2.0 * t;
        let n = a.x.len();
        let mut x = Vec::with_capacity(n);
        let mut dxds = Vec::with_capacity(n);
        for i in 0..n {
            let ma = a.u[i] / aa;
            let mb = b.u[i] / ab;
            x.push(h00 * a.x[i] + h10 * ds * ma + h01 * b.x[i] + h11 * ds * mb);
            dxds.push((d00 * a.x[i] + d01 * b.x[i]) / ds + d10 * ma + d11 * mb);
        }
        let u = linalg::unit(&dxds)?;
        Some((x, u))
    }
}

/// Traces a geodesic from `x0` along `u0` (normalized internally) until the
/// limit is reached or the ray leaves the metric domain. Fixed steps of `h`
/// in the formulation's own parameter, plus one shortened landing step so the
/// final sample sits on the limit; a limit in the companion parameter is
/// landed on by secant refinement of the last step.
pub fn trace(
    m: &MetricField,
    x0: &[f64],
    u0: &[f64],
    formulation: Formulation,
    h: f64,
    limit: TraceLimit,
) -> Result<GeodesicTrace> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidStep { h });
    }
    let target = limit.target();
    if !(target >= 0.0) || !target.is_finite() {
        return Err(Error::InvalidLimit { limit: target });
    }
    let u0 = linalg::unit(u0).ok_or(Error::ZeroDirection)?;
    if x0.len() != m.dim() || u0.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: x0.len(),
        });
    }
    // Immediate domain violation is an error; exits after the start truncate.
    let a0 = alpha(m, x0, &u0)?;

    let step = |st: &RayState, hh: f64| -> Result<RayState> {
        match formulation {
            Formulation::AlphaForm => step_alpha_form(m, st, hh),
            Formulation::Christoffel => step_christoffel(m, st, hh),
        }
    };
    // Progress along the limit's parameter and the rate at which one unit of
    // integration parameter advances it (exact 1 for the native parameter).
    let progress = |st: &RayState| -> f64 {
        match limit {
            TraceLimit::MaxS(_) => st.s,
            TraceLimit::MaxR(_) => st.r,
        }
    };
    let native = matches!(
        (formulation, limit),
        (Formulation::AlphaForm, TraceLimit::MaxR(_))
            | (Formulation::Christoffel, TraceLimit::MaxS(_))
    );

    let mut state = RayState {
        x: x0.to_vec(),
        u: u0,
        r: 0.0,
        s: 0.0,
    };
    let mut samples = Vec::new();
    let mut alphas = Vec::new();
    samples.push(state.clone());
    alphas.push(a0);
    let mut truncated = None;
    let land_tol = 1e-12 * target.max(1.0);

    for steps in 0.. {
        if steps >= MAX_STEPS {
            return Err(Error::StepBudgetExhausted { steps });
        }
        let remaining = target - progress(&state);
        if remaining <= land_tol {
            break;
        }
        let rate = if native {
            1.0
        } else {
            let a = *alphas.last().expect("nonempty");
            match formulation {
                Formulation::AlphaForm => a,        // dS/dr
                Formulation::Christoffel => 1.0 / a, // dr/dS
            }
        };
        let full_gain = rate * h;
        let attempt = if native {
            // Native parameter: land exactly by shortening the step.
            h.min(remaining)
        } else if full_gain < remaining {
            h
        } else {
            (remaining / rate).min(h)
        };
        let mut next = match step(&state, attempt) {
            Ok(st) => st,
            Err(Error::DomainViolation { point, .. }) => {
                truncated = Some(point);
                break;
            }
            Err(e) => return Err(e),
        };
        if !native {
            let gained = progress(&next) - progress(&state);
            if gained >= remaining - land_tol || attempt < h {
                // Landing step: refine by secant until the companion
                // parameter hits the target.
                let mut hh = attempt;
                for _ in 0..8 {
                    let gain = progress(&next) - progress(&state);
                    let miss = remaining - gain;
                    if miss.abs() <= land_tol || gain <= 0.0 {
                        break;
                    }
                    hh *= remaining / gain;
                    next = match step(&state, hh) {
                        Ok(st) => st,
                        Err(Error::DomainViolation { point, .. }) => {
                            truncated = Some(point);
                            break;
                        }
                        Err(e) => return Err(e),
                    };
                }
                if truncated.is_some() {
                    break;
                }
            }
        }
        let a_next = match alpha(m, &next.x, &next.u) {
            Ok(a) => a,
            Err(Error::DomainViolation { point, .. }) => {
                truncated = Some(point);
                break;
            }
            Err(e) => return Err(e),
        };
        samples.push(next.clone());
        alphas.push(a_next);
        state = next;
    }

    Ok(GeodesicTrace {
        metric_label: m.label().to_string(),
        formulation,
        h,
        samples,
        alphas,
        truncated,
    })
}

/// Pointwise deviation between two traces of the same scenario, resampled at
/// common metric arclengths.
#[derive(Debug, Clone)]
pub struct DeviationReport {
    /// Max chart distance between resampled positions.
    pub max_chart_distance: f64,
    /// Max angle between resampled tangents, radians.
    pub max_tangent_angle: f64,
    /// Compared range [0, s_hi].
    pub s_hi: f64,
    /// Number of resample points.
    pub compared: usize,
}

impl fmt::Display for DeviationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "max chart deviation {:.3e}, max tangent angle {:.3e} rad over S in [0, {:.6}] ({} points)",
            self.max_chart_distance, self.max_tangent_angle, self.s_hi, self.compared
        )
    }
}

/// Compares two traces that share a metric and start state. Both are
/// resampled at the union of their sample arclengths over the common range.
pub fn compare_traces(a: &GeodesicTrace, b: &GeodesicTrace) -> Result<DeviationReport> {
    if a.metric_label != b.metric_label {
        return Err(Error::NotComparable {
            reason: format!(
                "different metrics `{}` and `{}`",
                a.metric_label, b.metric_label
            ),
        });
    }
    let start_gap = linalg::dist(&a.start().x, &b.start().x)
        .max(linalg::dist(&a.start().u, &b.start().u));
    if start_gap > 1e-9 {
        return Err(Error::NotComparable {
            reason: format!("start states differ by {start_gap:.3e}"),
        });
    }
    let s_hi = a.s_end().min(b.s_end());
    if !(s_hi > 0.0) {
        return Err(Error::DisjointRanges { max_common: s_hi });
    }
    let mut ss: Vec<f64> = a
        .samples
        .iter()
        .chain(b.samples.iter())
        .map(|st| st.s)
        .filter(|&s| s >= 0.0 && s <= s_hi)
        .chain([s_hi])
        .collect();
    ss.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ss.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * s_hi.max(1.0));

    let mut max_chart: f64 = 0.0;
    let mut max_angle: f64 = 0.0;
    let mut compared = 0;
    for &s in &ss {
        let (Some((xa, ua)), Some((xb, ub))) = (a.interp_hermite_s(s), b.interp_hermite_s(s))
        else {
            continue;
        };
        max_chart = max_chart.max(linalg::dist(&xa, &xb));
        max_angle = max_angle.max(linalg::angle_between(&ua, &ub));
        compared += 1;
    }
    Ok(DeviationReport {
        max_chart_distance: max_chart,
        max_tangent_angle: max_angle,
        s_hi,
        compared,
    })
}

/// One refinement level of a convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub h: f64,
    pub max_chart_distance: f64,
    pub max_tangent_angle: f64,
    /// log2(previous deviation / this deviation); None on the first row or
    /// when a deviation vanishes.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConvergenceVerdict {
    /// All deviations at or below the exactness floor.
    Exact,
    /// Deviations shrink with the step; mean observed order attached.
    Converging { mean_order: f64 },
    /// Deviations stopped shrinking: the formulations disagree at a level the
    /// step size cannot explain.
    Plateau { level: f64 },
}

impl fmt::Display for ConvergenceVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConvergenceVerdict::Exact => write!(f, "exact (all deviations <= {EXACT_FLOOR:.0e})"),
            ConvergenceVerdict::Converging { mean_order } => {
                write!(f, "converging, mean observed order {mean_order:.2}")
            }
            ConvergenceVerdict::Plateau { level } => {
                write!(f, "plateau at {level:.3e}: formulations disagree beyond step error")
            }
        }
    }
}

/// Two-formulation convergence study over a ladder of halving step sizes.
#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub metric_label: String,
    pub rows: Vec<ConvergenceRow>,
    pub verdict: ConvergenceVerdict,
}

impl fmt::Display for ConvergenceStudy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "convergence study on `{}`:", self.metric_label)?;
        writeln!(f, "{:>12} {:>14} {:>14} {:>8}", "h", "chart dev", "angle dev", "order")?;
        for row in &self.rows {
            match row.order {
                Some(p) => writeln!(
                    f,
                    "{:>12.3e} {:>14.6e} {:>14.6e} {:>8.2}",
                    row.h, row.max_chart_distance, row.max_tangent_angle, p
                )?,
                None => writeln!(
                    f,
                    "{:>12.3e} {:>14.6e} {:>14.6e} {:>8}",
                    row.h, row.max_chart_distance, row.max_tangent_angle, "-"
                )?,
            }
        }
        write!(f, "verdict: {}", self.verdict)
    }
}

/// Traces both formulations at every step size of a halving ladder and
/// reports the deviation trend. The verdict records what the data show:
/// agreement at the integrator's order for interchangeable formulations, a
/// plateau where the formulations genuinely differ.
pub fn convergence_study(
    m: &MetricField,
    x0: &[f64],
    u0: &[f64],
    limit: TraceLimit,
    hs: &[f64],
) -> Result<ConvergenceStudy> {
    if hs.len() < 3 {
        return Err(Error::BadStepLadder {
            reason: format!("got {} step sizes", hs.len()),
        });
    }
    for w in hs.windows(2) {
        if !(w[1] > 0.0) || (w[0] / w[1] - 2.0).abs() > 1e-9 {
            return Err(Error::BadStepLadder {
                reason: format!("{} does not halve {}", w[1], w[0]),
            });
        }
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(hs.len());
    for &h in hs {
        let ta = trace(m, x0, u0, Formulation::AlphaForm, h, limit)?;
        let tb = trace(m, x0, u0, Formulation::Christoffel, h, limit)?;
        let dev = compare_traces(&ta, &tb)?;
        let order = rows.last().and_then(|prev: &ConvergenceRow| {
            let (p, c) = (prev.max_chart_distance, dev.max_chart_distance);
            // An order is only meaningful while the coarser deviation sits
            // above the exactness floor; below it both values are roundoff.
            if p > EXACT_FLOOR && c > 0.0 {
                Some((p / c).log2())
            } else {
                None
            }
        });
        rows.push(ConvergenceRow {
            h,
            max_chart_distance: dev.max_chart_distance,
            max_tangent_angle: dev.max_tangent_angle,
            order,
        });
    }
    let devs: Vec<f64> = rows.iter().map(|r| r.max_chart_distance).collect();
    let last = *devs.last().expect("nonempty");
    let verdict = if devs.iter().all(|&d| d <= EXACT_FLOOR) {
        ConvergenceVerdict::Exact
    } else if devs
        .windows(2)
        .any(|w| w[0] > EXACT_FLOOR && w[1] > EXACT_FLOOR && w[1] / w[0] > PLATEAU_RATIO)
    {
        // A genuine plateau needs both sides of the stalling pair above the
        // floor; a drop into roundoff is agreement, not disagreement.
        ConvergenceVerdict::Plateau { level: last }
    } else {
        let orders: Vec<f64> = rows.iter().filter_map(|r| r.order).collect();
        if orders.is_empty() {
            // Every ratio started below the floor yet some deviation exceeds
            // it: not reachable with monotone data, but classify by the
            // finest step rather than divide by zero.
            if last > EXACT_FLOOR {
                ConvergenceVerdict::Plateau { level: last }
            } else {
                ConvergenceVerdict::Exact
            }
        } else {
            ConvergenceVerdict::Converging {
                mean_order: orders.iter().sum::<f64>() / orders.len() as f64,
            }
        }
    };
    Ok(ConvergenceStudy {
        metric_label: m.label().to_string(),
        rows,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use approx::assert_abs_diff_eq;

    #[test]
    fn formulation_names_round_trip() {
        for f in [Formulation::AlphaForm, Formulation::Christoffel] {
            assert_eq!(f.name().parse::<Formulation>().unwrap(), f);
        }
        assert!("newton".parse::<Formulation>().is_err());
    }

    #[test]
    fn alpha_is_the_directional_stretch() {
        let m = builtin::sphere(1e-6).unwrap();
        let th = std::f64::consts::FRAC_PI_3;
        // along the polar axis the stretch is 1, along the azimuthal axis sin(theta)
        assert_abs_diff_eq!(alpha(&m, &[th, 0.0], &[1.0, 0.0]).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            alpha(&m, &[th, 0.0], &[0.0, 1.0]).unwrap(),
            th.sin(),
            epsilon = 1e-15
        );
        let err = alpha(&m, &[th, 0.0], &[0.5, 0.5]).unwrap_err();
        assert!(matches!(err, Error::NonUnitDirection { .. }));
    }

    #[test]
    fn alpha_gradient_matches_hand_value_on_half_plane() {
        let m = builtin::poincare_half_plane().unwrap();
        let g = alpha_gradient(&m, &[0.0, 2.0], &[1.0, 0.0]).unwrap();
        // alpha = 1/y, so grad alpha = (0, -1/y^2)
        assert_abs_diff_eq!(g[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], -0.25, epsilon = 1e-12);
    }

    #[test]
    fn straight_lines_in_flat_space() {
        let m = builtin::euclidean(2).unwrap();
        for form in [Formulation::AlphaForm, Formulation::Christoffel] {
            let t = trace(&m, &[0.0, 0.0], &[3.0, 4.0], form, 0.5, TraceLimit::MaxR(5.0)).unwrap();
            let end = t.end();
            assert_abs_diff_eq!(end.x[0], 3.0, epsilon = 1e-12);
            assert_abs_diff_eq!(end.x[1], 4.0, epsilon = 1e-12);
            assert_abs_diff_eq!(end.r, 5.0, epsilon = 1e-12);
            assert_abs_diff_eq!(end.s, 5.0, epsilon = 1e-12);
            assert_eq!(t.samples.len(), 11);
            assert!(t.truncated.is_none());
        }
    }

    #[test]
    fn landing_is_exact_in_the_companion_parameter() {
        let m = builtin::poincare_half_plane().unwrap();
        // alpha form integrates in r; ask for a limit in S
        let t = trace(
            &m,
            &[0.0, 1.0],
            &[1.0, 0.0],
            Formulation::AlphaForm,
            1e-2,
            TraceLimit::MaxS(0.5),
        )
        .unwrap();
        assert_abs_diff_eq!(t.s_end(), 0.5, epsilon = 1e-9);
        // christoffel integrates in S; ask for a limit in r
        let t = trace(
            &m,
            &[0.0, 1.0],
            &[1.0, 0.0],
            Formulation::Christoffel,
            1e-2,
            TraceLimit::MaxR(0.5),
        )
        .unwrap();
        assert_abs_diff_eq!(t.r_end(), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn half_plane_rays_ride_the_unit_circle() {
        let m = builtin::poincare_half_plane().unwrap();
        let t = trace(
            &m,
            &[0.0, 1.0],
            &[1.0, 0.0],
            Formulation::AlphaForm,
            1e-3,
            TraceLimit::MaxS(1.0),
        )
        .unwrap();
        for st in &t.samples {
            let radius = (st.x[0] * st.x[0] + st.x[1] * st.x[1]).sqrt();
            assert_abs_diff_eq!(radius, 1.0, epsilon = 1e-7);
        }
        // closed form: polar angle from the +x axis is 2*atan(exp(-S))
        let phi = 2.0 * (-1.0f64).exp().atan();
        let end = t.end();
        assert_abs_diff_eq!(end.x[0], phi.cos(), epsilon = 1e-7);
        assert_abs_diff_eq!(end.x[1], phi.sin(), epsilon = 1e-7);
    }

    #[test]
    fn equator_runs_in_metric_arclength() {
        let m = builtin::sphere(1e-6).unwrap();
        let t = trace(
            &m,
            &[std::f64::consts::FRAC_PI_2, 0.0],
            &[0.0, 1.0],
            Formulation::Christoffel,
            1e-3,
            TraceLimit::MaxS(0.5),
        )
        .unwrap();
        let end = t.end();
        assert_abs_diff_eq!(end.x[0], std::f64::consts::FRAC_PI_2, epsilon = 1e-9);
        assert_abs_diff_eq!(end.x[1], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn domain_exit_truncates_and_keeps_interior_samples() {
        let m = builtin::poincare_half_plane().unwrap();
        let t = trace(
            &m,
            &[0.0, 0.05],
            &[0.0, -1.0],
            Formulation::AlphaForm,
            0.01,
            TraceLimit::MaxR(1.0),
        )
        .unwrap();
        assert!(t.truncated.is_some());
        assert!(t.r_end() < 1.0);
        assert!(t.samples.iter().all(|st| st.x[1] > 0.0));
    }

    #[test]
    fn starting_outside_the_domain_is_an_error() {
        let m = builtin::poincare_half_plane().unwrap();
        let err = trace(
            &m,
            &[0.0, -1.0],
            &[1.0, 0.0],
            Formulation::AlphaForm,
            0.01,
            TraceLimit::MaxR(1.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DomainViolation { .. }));
    }

    #[test]
    fn lens_bends_rays_toward_higher_index() {
        let m = builtin::isotropic_index(0.5, 1.5, 2).unwrap();
        let st = RayState::new(vec![-1.5, 0.5], &[1.0, 0.0]).unwrap();
        let next = step_alpha_form(&m, &st, 0.01).unwrap();
        // index grows toward the origin, so the ray tips downward
        assert!(next.u[1] < 0.0);
        assert_abs_diff_eq!(linalg::norm(&next.u), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn interpolants_agree_on_a_straight_line() {
        let m = builtin::euclidean(2).unwrap();
        let t = trace(
            &m,
            &[0.0, 0.0],
            &[1.0, 0.0],
            Formulation::AlphaForm,
            0.25,
            TraceLimit::MaxR(2.0),
        )
        .unwrap();
        let (xl, ul, r) = t.interp_linear_s(0.6).unwrap();
        let (xh, uh) = t.interp_hermite_s(0.6).unwrap();
        assert_abs_diff_eq!(xl[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(xh[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(r, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(ul[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(uh[1], 0.0, epsilon = 1e-15);
        assert!(t.interp_linear_s(2.5).is_none());
        assert!(t.interp_linear_s(-0.1).is_none());
    }

    #[test]
    fn comparing_requires_shared_scenario() {
        let e = builtin::euclidean(2).unwrap();
        let p = builtin::poincare_half_plane().unwrap();
        let a = trace(&e, &[0.0, 0.5], &[1.0, 0.0], Formulation::AlphaForm, 0.1, TraceLimit::MaxR(1.0)).unwrap();
        let b = trace(&p, &[0.0, 0.5], &[1.0, 0.0], Formulation::AlphaForm, 0.1, TraceLimit::MaxR(1.0)).unwrap();
        assert!(matches!(compare_traces(&a, &b), Err(Error::NotComparable { .. })));
        let c = trace(&e, &[0.0, 0.6], &[1.0, 0.0], Formulation::AlphaForm, 0.1, TraceLimit::MaxR(1.0)).unwrap();
        assert!(matches!(compare_traces(&a, &c), Err(Error::NotComparable { .. })));
        let rep = compare_traces(&a, &a).unwrap();
        assert_eq!(rep.max_chart_distance, 0.0);
        assert_eq!(rep.max_tangent_angle, 0.0);
        assert!(rep.compared > 2);
    }

    #[test]
    fn flat_space_study_reports_exact() {
        let m = builtin::euclidean(2).unwrap();
        let study = convergence_study(
            &m,
            &[0.0, 0.0],
            &[1.0, 2.0],
            TraceLimit::MaxS(1.0),
            &[4e-2, 2e-2, 1e-2],
        )
        .unwrap();
        assert_eq!(study.verdict, ConvergenceVerdict::Exact);
    }

    #[test]
    fn step_ladders_must_halve() {
        let m = builtin::euclidean(2).unwrap();
        let bad = convergence_study(
            &m,
            &[0.0, 0.0],
            &[1.0, 0.0],
            TraceLimit::MaxS(1.0),
            &[1e-2, 6e-3, 3e-3],
        );
        assert!(matches!(bad, Err(Error::BadStepLadder { .. })));
        let short = convergence_study(
            &m,
            &[0.0, 0.0],
            &[1.0, 0.0],
            TraceLimit::MaxS(1.0),
            &[1e-2, 5e-3],
        );
        assert!(matches!(short, Err(Error::BadStepLadder { .. })));
    }

    #[test]
    fn bad_steps_and_limits_are_rejected() {
        let m = builtin::euclidean(2).unwrap();
        assert!(matches!(
            trace(&m, &[0.0, 0.0], &[1.0, 0.0], Formulation::AlphaForm, 0.0, TraceLimit::MaxR(1.0)),
            Err(Error::InvalidStep { .. })
        ));
        assert!(matches!(
            trace(&m, &[0.0, 0.0], &[1.0, 0.0], Formulation::AlphaForm, 0.1, TraceLimit::MaxR(-1.0)),
            Err(Error::InvalidLimit { .. })
        ));
        assert!(matches!(
            trace(&m, &[0.0, 0.0], &[0.0, 0.0], Formulation::AlphaForm, 0.1, TraceLimit::MaxR(1.0)),
            Err(Error::ZeroDirection)
        ));
        let zero = trace(&m, &[0.0, 0.0], &[1.0, 0.0], Formulation::AlphaForm, 0.1, TraceLimit::MaxR(0.0)).unwrap();
        assert_eq!(zero.samples.len(), 1);
    }
}
