//! Wavefront construction over geodesic fans.
//!
//! A fan of geodesics from a common source sweeps out level sets of equal
//! metric arclength S. This module extracts those level sets and runs the
//! checks that make the wavefront picture quantitative: equal S-increments
//! across rays, alignment of the S-gradient with the ray tangents, the
//! pair-convergence estimate of the turning rate dF/dr, and the tangency of
//! successive fronts to the expansion discs of the earlier one.

use crate::error::{Error, Result};
use crate::frames::FrameField;
use crate::geodesic::{self, Formulation, GeodesicTrace, TraceLimit};
use crate::linalg;
use crate::metric::MetricField;
use rayon::prelude::*;
use std::fmt;

/// Neighboring level-set points further apart than this fail the density
/// precondition of the alignment check.
pub const DENSITY_LIMIT: f64 = 0.1;

/// Disc-approximation refusal threshold: the quadratic term of the tangency
/// tolerance must stay below this fraction of the level gap.
pub const DISC_BUDGET: f64 = 0.1;

/// A system of geodesics from a single source point, traced to a common
/// metric-arclength limit. In 2D the launch directions are evenly spaced
/// headings, measured from the +x2 axis toward +x1.
#[derive(Debug, Clone)]
pub struct GeodesicFan {
    pub source: Vec<f64>,
    pub formulation: Formulation,
    pub h: f64,
    pub max_s: f64,
    /// Launch headings (2D fans only; explicit-direction fans leave it empty).
    pub angles: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    pub traces: Vec<GeodesicTrace>,
    /// True when the headings wrap a full circle, making level sets closed.
    pub full_circle: bool,
}

impl GeodesicFan {
    pub fn count(&self) -> usize {
        self.traces.len()
    }

    pub fn dim(&self) -> usize {
        self.source.len()
    }

    pub fn metric_label(&self) -> &str {
        &self.traces[0].metric_label
    }

    /// Indices of rays that exited the domain before reaching max_S.
    pub fn flagged(&self) -> Vec<usize> {
        self.traces
            .iter()
            .enumerate()
            .filter(|(_, t)| t.truncated.is_some())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Traces a 2D fan of `count` rays with evenly spaced headings over the
/// angular window `(start, span)` in radians; a span of 2*pi wraps without
/// repeating the first heading. Rays run independently in parallel; a ray
/// that leaves the domain early is kept with its truncated range.
pub fn trace_fan(
    m: &MetricField,
    x0: &[f64],
    count: usize,
    form: Formulation,
    h: f64,
    max_s: f64,
    window: Option<(f64, f64)>,
) -> Result<GeodesicFan> {
    if m.dim() != 2 {
        return Err(Error::FanNeedsPlane { dim: m.dim() });
    }
    if count < 3 {
        return Err(Error::FanTooSmall { min: 3, got: count });
    }
    let (start, span) = window.unwrap_or((0.0, std::f64::consts::TAU));
    if !(span > 0.0) || span > std::f64::consts::TAU + 1e-12 {
        return Err(Error::InvalidParam {
            name: "window".into(),
            reason: format!("span {span} outside (0, 2*pi]"),
        });
    }
    let full_circle = (span - std::f64::consts::TAU).abs() <= 1e-12;
    let angles: Vec<f64> = if full_circle {
        (0..count).map(|k| start + span * k as f64 / count as f64).collect()
    } else {
        (0..count)
            .map(|k| start + span * k as f64 / (count - 1) as f64)
            .collect()
    };
    // headings measured from the +x2 axis
    let directions: Vec<Vec<f64>> = angles.iter().map(|&a| vec![a.sin(), a.cos()]).collect();
    let fan = trace_fan_directions(m, x0, &directions, form, h, max_s)?;
    Ok(GeodesicFan {
        angles,
        full_circle,
        ..fan
    })
}

/// Traces a fan along explicit start directions (any dimension). Level-set
/// extraction needs the 2D constructor; this one only traces.
pub fn trace_fan_directions(
    m: &MetricField,
    x0: &[f64],
    directions: &[Vec<f64>],
    form: Formulation,
    h: f64,
    max_s: f64,
) -> Result<GeodesicFan> {
    if directions.len() < 3 {
        return Err(Error::FanTooSmall {
            min: 3,
            got: directions.len(),
        });
    }
    for (i, d) in directions.iter().enumerate() {
        let di = linalg::unit(d).ok_or(Error::ZeroDirection)?;
        for other in directions.iter().take(i) {
            let oi = linalg::unit(other).ok_or(Error::ZeroDirection)?;
            if linalg::dist(&di, &oi) <= 1e-12 {
                return Err(Error::InvalidParam {
                    name: "directions".into(),
                    reason: format!("ray {i} repeats an earlier heading"),
                });
            }
        }
    }
    let traces: Vec<GeodesicTrace> = directions
        .par_iter()
        .map(|d| geodesic::trace(m, x0, d, form, h, TraceLimit::MaxS(max_s)))
        .collect::<Result<_>>()?;
    Ok(GeodesicFan {
        source: x0.to_vec(),
        formulation: form,
        h,
        max_s,
        angles: Vec::new(),
        directions: directions.to_vec(),
        traces,
        full_circle: false,
    })
}

/// Points of equal metric arclength S across a 2D fan, one per ray that
/// reached S, in ray order. Crossings are linear in S within the bracketing
/// step, so each point's S matches the target to within the interpolation
/// bound alpha_max * h.
#[derive(Debug, Clone)]
pub struct LevelSet {
    pub s: f64,
    /// Fan ray indices contributing a point (rays truncated before S drop out).
    pub ray_indices: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    /// Interpolated unit tangents at the crossings.
    pub tangents: Vec<Vec<f64>>,
    /// Chart arclength of each ray at its crossing.
    pub rs: Vec<f64>,
    /// Interpolated stretch factor at each crossing.
    pub alphas: Vec<f64>,
    /// True when the set closes into a loop (full-circle fan, no ray dropped).
    pub closed: bool,
}

impl LevelSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Extracts the S=const level set of a 2D fan.
pub fn level_set(fan: &GeodesicFan, s: f64) -> Result<LevelSet> {
    if fan.dim() != 2 {
        return Err(Error::FanNeedsPlane { dim: fan.dim() });
    }
    let max_reached = fan
        .traces
        .iter()
        .map(|t| t.s_end())
        .fold(f64::NEG_INFINITY, f64::max);
    if !(s >= 0.0) || s > max_reached {
        return Err(Error::LevelOutOfRange { s, max_s: max_reached });
    }
    let mut ray_indices = Vec::new();
    let mut points = Vec::new();
    let mut tangents = Vec::new();
    let mut rs = Vec::new();
    let mut alphas = Vec::new();
    for (i, t) in fan.traces.iter().enumerate() {
        let (Some((x, u, r)), Some(a)) = (t.interp_linear_s(s), t.interp_alpha_s(s)) else {
            continue;
        };
        ray_indices.push(i);
        points.push(x);
        tangents.push(u);
        rs.push(r);
        alphas.push(a);
    }
    let closed = fan.full_circle && ray_indices.len() == fan.count();
    Ok(LevelSet {
        s,
        ray_indices,
        points,
        tangents,
        rs,
        alphas,
        closed,
    })
}

/// Chart arclength of a ray at metric arclength s, linear within the step.
fn crossing_r(t: &GeodesicTrace, s: f64) -> f64 {
    t.interp_linear_s(s)
        .map(|(_, _, r)| r)
        .unwrap_or_else(|| t.r_end())
}

/// Integral of a quadratic through (r0,a0), (r1,a1), (r2,a2) over [ra, rb].
fn quadratic_integral(r0: f64, a0: f64, r1: f64, a1: f64, r2: f64, a2: f64, ra: f64, rb: f64) -> f64 {
    // Work relative to the middle node: the panels are ~1e-3 wide but sit at
    // arbitrary r, and the cubic primitive evaluated at absolute positions
    // cancels catastrophically before the O(h^2) denominator divides.
    let (r0, r2, ra, rb) = (r0 - r1, r2 - r1, ra - r1, rb - r1);
    let r1 = 0.0;
    // Lagrange basis integrated exactly
    let term = |ri: f64, rj: f64, rk: f64, ai: f64| -> f64 {
        let denom = (ri - rj) * (ri - rk);
        let prim = |r: f64| -> f64 {
            r * r * r / 3.0 - (rj + rk) * r * r / 2.0 + rj * rk * r
        };
        ai * (prim(rb) - prim(ra)) / denom
    };
    term(r0, r1, r2, a0) + term(r1, r0, r2, a1) + term(r2, r0, r1, a2)
}

/// Recomputes ∫ alpha dr over [ra, rb] from a trace's stored (r, alpha)
/// samples: Simpson-type quadratic panels over interior sample pairs, with
/// the partial end intervals handled by the quadratic through the nearest
/// three samples.
fn resum_arclength(t: &GeodesicTrace, ra: f64, rb: f64) -> f64 {
    let rs: Vec<f64> = t.samples.iter().map(|st| st.r).collect();
    let al = &t.alphas;
    let n = rs.len();
    if n < 3 {
        // degenerate trace: trapezoid on whatever exists
        if n == 2 {
            let w = |r: f64| -> f64 {
                let t01 = ((r - rs[0]) / (rs[1] - rs[0])).clamp(0.0, 1.0);
                al[0] * (1.0 - t01) + al[1] * t01
            };
            return 0.5 * (w(ra) + w(rb)) * (rb - ra);
        }
        return al[0] * (rb - ra);
    }
    // first sample index with r >= ra, last with r <= rb
    let lo = rs.partition_point(|&r| r < ra);
    let hi = rs.partition_point(|&r| r <= rb).saturating_sub(1);
    if lo > hi {
        // both crossings inside one sample interval
        let k = lo.saturating_sub(1).min(n - 3);
        return quadratic_integral(rs[k], al[k], rs[k + 1], al[k + 1], rs[k + 2], al[k + 2], ra, rb);
    }
    let mut total = 0.0;
    // partial head [ra, rs[lo]]
    if ra < rs[lo] {
        let k = lo.saturating_sub(1).min(n - 3);
        total += quadratic_integral(
            rs[k], al[k], rs[k + 1], al[k + 1], rs[k + 2], al[k + 2], ra, rs[lo],
        );
    }
    // interior panels, two intervals at a time
    let mut i = lo;
    while i + 2 <= hi {
        total += quadratic_integral(
            rs[i], al[i], rs[i + 1], al[i + 1], rs[i + 2], al[i + 2], rs[i], rs[i + 2],
        );
        i += 2;
    }
    if i + 1 <= hi {
        // odd leftover interval: quadratic through it and its left neighbor
        let k = i.saturating_sub(1).min(n - 3);
        total += quadratic_integral(
            rs[k], al[k], rs[k + 1], al[k + 1], rs[k + 2], al[k + 2], rs[i], rs[i + 1],
        );
    }
    // partial tail [rs[hi], rb]
    if rb > rs[hi] {
        let k = hi.saturating_sub(1).min(n - 3);
        total += quadratic_integral(
            rs[k], al[k], rs[k + 1], al[k + 1], rs[k + 2], al[k + 2], rs[hi], rb,
        );
    }
    total
}

/// Checks that the metric arclength gained between levels S_a and S_b is the
/// same on every ray: recomputes ∫ alpha dr between the two crossings of each
/// ray by quadrature over the stored samples and returns the largest
/// |recomputed - (S_b - S_a)|.
pub fn equal_increment_check(fan: &GeodesicFan, s_a: f64, s_b: f64) -> Result<f64> {
    if !(s_a >= 0.0 && s_b > s_a) {
        return Err(Error::InvalidParam {
            name: "S_a,S_b".into(),
            reason: format!("need 0 <= S_a < S_b, got {s_a}, {s_b}"),
        });
    }
    let want = s_b - s_a;
    let mut max_dev: f64 = 0.0;
    for t in &fan.traces {
        if t.s_end() < s_b {
            return Err(Error::LevelOutOfRange {
                s: s_b,
                max_s: t.s_end(),
            });
        }
        let ra = crossing_r(t, s_a);
        let rb = crossing_r(t, s_b);
        let got = resum_arclength(t, ra, rb);
        max_dev = max_dev.max((got - want).abs());
    }
    Ok(max_dev)
}

/// Measures how well the gradient of the arclength field S lines up with the
/// ray tangents at level S. At each level-set point the gradient estimate
/// solves two linear conditions: growth alpha along the ray's own tangent,
/// zero growth along the chord through the neighboring rays' points. The
/// estimate and the tangent are both pushed into the local orthogonal frame,
/// where their angle is metric-true; the largest angle over the set is
/// returned. It shrinks as the fan densifies since the chord converges to
/// the true level-curve tangent.
pub fn gradient_alignment_check(m: &MetricField, fan: &GeodesicFan, s: f64) -> Result<f64> {
    let level = level_set(fan, s)?;
    let npts = level.len();
    if npts < 3 {
        return Err(Error::FanTooSmall { min: 3, got: npts });
    }
    let mut max_gap: f64 = 0.0;
    let gaps = if level.closed { npts } else { npts - 1 };
    for i in 0..gaps {
        let j = (i + 1) % npts;
        max_gap = max_gap.max(linalg::dist(&level.points[i], &level.points[j]));
    }
    if max_gap > DENSITY_LIMIT {
        return Err(Error::FanTooSparse {
            s,
            max_gap,
            limit: DENSITY_LIMIT,
        });
    }
    let mut max_angle: f64 = 0.0;
    for i in 0..npts {
        let (prev, next) = if level.closed {
            ((i + npts - 1) % npts, (i + 1) % npts)
        } else if i == 0 {
            (0, 1)
        } else if i == npts - 1 {
            (npts - 2, npts - 1)
        } else {
            (i - 1, i + 1)
        };
        let chord: Vec<f64> = level.points[next]
            .iter()
            .zip(&level.points[prev])
            .map(|(a, b)| a - b)
            .collect();
        let Some(t_hat) = linalg::unit(&chord) else {
            continue;
        };
        let u = &level.tangents[i];
        let a = level.alphas[i];
        let det = u[0] * t_hat[1] - u[1] * t_hat[0];
        if det.abs() < 1e-8 {
            return Err(Error::DegenerateGradient { square: det * det });
        }
        // [u^T; t^T] g = (alpha, 0)
        let g = vec![a * t_hat[1] / det, -a * t_hat[0] / det];
        let frame = FrameField::from_metric(m, &level.points[i])?;
        let g_frame = frame.gradient_to_frame(&g);
        let u_frame = frame.to_frame(u);
        max_angle = max_angle.max(linalg::angle_between(&g_frame, &u_frame));
    }
    Ok(max_angle)
}

/// The two-point turning-rate estimate and its analytic reference.
#[derive(Debug, Clone)]
pub struct PairEstimate {
    /// Chart separation of the probe pair.
    pub lambda: f64,
    /// Probe advance length.
    pub dr: f64,
    /// arcsin(dr * (alpha'/alpha'' - 1) / lambda) / dr.
    pub estimate: f64,
    /// |transverse gradient of alpha| / alpha at the midpoint.
    pub reference: f64,
    pub abs_error: f64,
}

impl fmt::Display for PairEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "dF/dr estimate {:.6} vs reference {:.6} (|err| {:.3e}) at lambda={:.1e}, dr={:.1e}",
            self.estimate, self.reference, self.abs_error, self.lambda, self.dr
        )
    }
}

/// Estimates the turning rate dF/dr at (x, u) from a pair of parallel probes
/// offset by ±lambda/2 along the normal to u, the normal oriented toward the
/// alpha gradient so the estimate is signed like the reference. The error
/// scales as O(lambda) + O(dr).
pub fn pair_turning_rate(
    m: &MetricField,
    x: &[f64],
    u: &[f64],
    lambda: f64,
    dr: f64,
) -> Result<PairEstimate> {
    if m.dim() != 2 {
        return Err(Error::FanNeedsPlane { dim: m.dim() });
    }
    for (name, v) in [("lambda", lambda), ("dr", dr)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParam {
                name: name.into(),
                reason: format!("must be finite and positive, got {v}"),
            });
        }
    }
    let u = linalg::unit(u).ok_or(Error::ZeroDirection)?;
    let g = geodesic::alpha_gradient(m, x, &u)?;
    let mut normal = vec![-u[1], u[0]];
    if linalg::dot(&g, &normal) < 0.0 {
        normal[0] = -normal[0];
        normal[1] = -normal[1];
    }
    let offset = |sign: f64| -> Vec<f64> {
        x.iter()
            .zip(&normal)
            .map(|(xi, ni)| xi + sign * 0.5 * lambda * ni)
            .collect()
    };
    let a_high = geodesic::alpha(m, &offset(1.0), &u)?;
    let a_low = geodesic::alpha(m, &offset(-1.0), &u)?;
    let arg = dr * (a_high / a_low - 1.0) / lambda;
    if arg.abs() > 1.0 {
        return Err(Error::PairDegenerate { arg });
    }
    let estimate = arg.asin() / dr;
    let a0 = geodesic::alpha(m, x, &u)?;
    let gu = linalg::dot(&g, &u);
    let transverse: Vec<f64> = g.iter().zip(&u).map(|(gi, ui)| gi - gu * ui).collect();
    let reference = linalg::norm(&transverse) / a0;
    Ok(PairEstimate {
        lambda,
        dr,
        estimate,
        reference,
        abs_error: (estimate - reference).abs(),
    })
}

/// Outcome of a Huygens disc-tangency check between two nearby level sets.
#[derive(Debug, Clone)]
pub struct HuygensReport {
    pub s1: f64,
    pub s2: f64,
    pub delta_s: f64,
    /// Distance tolerance: 2*alpha_max*h (resolution) + 0.5*dS^2*kappa_max
    /// (disc approximation).
    pub tol: f64,
    pub alpha_max: f64,
    /// Largest discrete curvature of the outer level set.
    pub kappa_max: f64,
    pub rays: usize,
    /// Rays whose disc the outer set cuts deeper than tol.
    pub penetrations: usize,
    /// Rays whose own outer point touches their disc within tol.
    pub tangencies: usize,
    /// Most negative signed clearance (outer polyline to disc boundary).
    pub min_clearance: f64,
    /// Largest |distance(center, own outer point) - radius|.
    pub max_own_gap: f64,
    pub passed: bool,
}

impl fmt::Display for HuygensReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "huygens tangency S={} -> S={} over {} rays: {}",
            self.s1,
            self.s2,
            self.rays,
            if self.passed { "pass" } else { "FAIL" }
        )?;
        writeln!(
            f,
            "  tol {:.3e} (alpha_max {:.4}, kappa_max {:.4}), min clearance {:.3e}",
            self.tol, self.alpha_max, self.kappa_max, self.min_clearance
        )?;
        write!(
            f,
            "  penetrations {}, tangencies {}/{}, max own-disc gap {:.3e}",
            self.penetrations, self.tangencies, self.rays, self.max_own_gap
        )
    }
}

fn point_segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let abx = b[0] - a[0];
    let aby = b[1] - a[1];
    let len_sq = abx * abx + aby * aby;
    if len_sq == 0.0 {
        return linalg::dist(p, a);
    }
    let t = (((p[0] - a[0]) * abx + (p[1] - a[1]) * aby) / len_sq).clamp(0.0, 1.0);
    let fx = a[0] + t * abx;
    let fy = a[1] + t * aby;
    ((p[0] - fx).powi(2) + (p[1] - fy).powi(2)).sqrt()
}

/// Discrete (Menger) curvature through three points.
fn menger_curvature(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let la = linalg::dist(a, b);
    let lb = linalg::dist(b, c);
    let lc = linalg::dist(c, a);
    let denom = la * lb * lc;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * cross.abs() / denom
    }
}

/// Verifies the Huygens picture between levels S1 < S2 of a 2D fan: each
/// point p of the S1 set owns a disc of chart radius (S2-S1)/alpha(p); the
/// S2 polyline must stay outside every disc (clearance >= -tol) while
/// touching the disc of its own ray (gap <= tol). The tolerance combines the
/// sampling resolution 2*alpha_max*h with the second-order disc error
/// 0.5*dS^2*kappa_max. Works best when S2-S1 spans only a few steps; the
/// check refuses when the disc error alone would exceed a tenth of the gap,
/// since tangency would then be unfalsifiable at this resolution.
pub fn huygens_tangency_check(fan: &GeodesicFan, s1: f64, s2: f64) -> Result<HuygensReport> {
    if !(s1 >= 0.0 && s2 > s1) {
        return Err(Error::InvalidParam {
            name: "S1,S2".into(),
            reason: format!("need 0 <= S1 < S2, got {s1}, {s2}"),
        });
    }
    let delta_s = s2 - s1;
    let inner = level_set(fan, s1)?;
    let outer = level_set(fan, s2)?;
    if inner.len() != fan.count() || outer.len() != fan.count() {
        return Err(Error::LevelOutOfRange {
            s: s2,
            max_s: fan
                .traces
                .iter()
                .map(|t| t.s_end())
                .fold(f64::INFINITY, f64::min),
        });
    }
    let n = fan.count();
    let alpha_max = inner
        .alphas
        .iter()
        .chain(outer.alphas.iter())
        .fold(0.0f64, |acc, &a| acc.max(a));
    let mut kappa_max: f64 = 0.0;
    let triples = if outer.closed { n } else { n.saturating_sub(2) };
    for i in 0..triples {
        let (a, b, c) = if outer.closed {
            (i, (i + 1) % n, (i + 2) % n)
        } else {
            (i, i + 1, i + 2)
        };
        kappa_max = kappa_max.max(menger_curvature(
            &outer.points[a],
            &outer.points[b],
            &outer.points[c],
        ));
    }
    let disc_err = 0.5 * delta_s * delta_s * kappa_max;
    if disc_err > DISC_BUDGET * delta_s {
        return Err(Error::DiscStepTooLarge {
            delta_s,
            product: delta_s * kappa_max,
            limit: 2.0 * DISC_BUDGET,
        });
    }
    let tol = 2.0 * alpha_max * fan.h + disc_err;
    let segs = if outer.closed { n } else { n - 1 };
    let mut penetrations = 0;
    let mut tangencies = 0;
    let mut min_clearance = f64::INFINITY;
    let mut max_own_gap: f64 = 0.0;
    for i in 0..n {
        let center = &inner.points[i];
        let radius = delta_s / inner.alphas[i];
        let mut dist = f64::INFINITY;
        for j in 0..segs {
            let k = (j + 1) % n;
            dist = dist.min(point_segment_distance(center, &outer.points[j], &outer.points[k]));
        }
        let clearance = dist - radius;
        min_clearance = min_clearance.min(clearance);
        if clearance < -tol {
            penetrations += 1;
        }
        let own_gap = (linalg::dist(center, &outer.points[i]) - radius).abs();
        max_own_gap = max_own_gap.max(own_gap);
        if own_gap <= tol {
            tangencies += 1;
        }
    }
    let passed = penetrations == 0 && tangencies == n;
    Ok(HuygensReport {
        s1,
        s2,
        delta_s,
        tol,
        alpha_max,
        kappa_max,
        rays: n,
        penetrations,
        tangencies,
        min_clearance,
        max_own_gap,
        passed,
    })
}
