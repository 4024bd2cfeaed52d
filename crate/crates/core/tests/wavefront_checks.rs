//! Fan and wavefront checks against closed-form oracles: half-plane rays on
//! Euclidean circles, level sets at exact hyperbolic radius, equal metric
//! increments between wavefronts, disc tangency, density refinement of the
//! gradient alignment estimate, and the paired-probe turning rate.

use rhotrace_core::builtin;
use rhotrace_core::geodesic::Formulation;
use rhotrace_core::wavefront::{
    equal_increment_check, gradient_alignment_check, huygens_tangency_check, level_set,
    pair_turning_rate, trace_fan, GeodesicFan,
};

const FRAC_PI_2: f64 = std::f64::consts::FRAC_PI_2;

fn fan_alpha_max(fan: &GeodesicFan) -> f64 {
    fan.traces
        .iter()
        .flat_map(|t| t.alphas.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Geodesic distance between half-plane points, from the chart chord.
fn hyperbolic_distance(p: &[f64], q: &[f64]) -> f64 {
    let dx = p[0] - q[0];
    let dy = p[1] - q[1];
    (1.0 + (dx * dx + dy * dy) / (2.0 * p[1] * q[1])).acosh()
}

// Half-plane geodesics are Euclidean circles centered on the boundary axis;
// the center follows from the tangent being perpendicular to the radius.
#[test]
fn half_plane_fan_rays_ride_circles_centered_on_the_axis() {
    let m = builtin::poincare_half_plane().unwrap();
    let fan = trace_fan(&m, &[0.0, 1.0], 32, Formulation::AlphaForm, 1e-3, 1.0, None).unwrap();
    assert!(fan.flagged().is_empty());
    let mut fitted = 0;
    for (dir, t) in fan.directions.iter().zip(&fan.traces) {
        if dir[0].abs() < 0.2 {
            continue; // near-vertical rays degenerate to lines
        }
        let center = dir[1] / dir[0];
        let radius = (center * center + 1.0).sqrt();
        for st in &t.samples {
            let r = ((st.x[0] - center).powi(2) + st.x[1].powi(2)).sqrt();
            assert!(
                (r - radius).abs() <= 1e-8,
                "ray {dir:?}: sample {:?} off its circle by {:.3e}",
                st.x,
                (r - radius).abs()
            );
        }
        fitted += 1;
    }
    assert!(fitted >= 24, "only {fitted} rays checked");
}

#[test]
fn half_plane_level_set_sits_at_the_oracle_distance() {
    let m = builtin::poincare_half_plane().unwrap();
    let fan = trace_fan(&m, &[0.0, 1.0], 32, Formulation::AlphaForm, 1e-3, 0.6, None).unwrap();
    let level = level_set(&fan, 0.5).unwrap();
    assert!(level.closed);
    assert_eq!(level.len(), 32);
    for p in &level.points {
        let d = hyperbolic_distance(p, &[0.0, 1.0]);
        assert!((d - 0.5).abs() <= 1e-4, "point {p:?} at distance {d}");
    }
}

// A bump of higher index bends rays toward itself: a narrow fan aimed
// through the bump crosses the axis, so every launch tilt flips sign.
#[test]
fn lens_fan_focuses_through_the_index_peak() {
    let m = builtin::isotropic_index(0.5, 1.0, 2).unwrap();
    let window = (FRAC_PI_2 - 0.15, 0.3); // (start, span) straddling the +x1 heading
    let fan = trace_fan(
        &m,
        &[-3.0, 0.0],
        16,
        Formulation::AlphaForm,
        1e-3,
        5.0,
        Some(window),
    )
    .unwrap();
    assert!(fan.flagged().is_empty());
    for (dir, t) in fan.directions.iter().zip(&fan.traces) {
        let start_tilt = dir[1];
        let end_tilt = t.end().u[1];
        assert!(
            start_tilt * end_tilt < 0.0,
            "tilt {start_tilt:.4} did not flip (ended {end_tilt:.4})"
        );
    }
}

#[test]
fn metric_increments_between_wavefronts_are_equal_along_every_ray() {
    let euclidean = builtin::euclidean(2).unwrap();
    let poincare = builtin::poincare_half_plane().unwrap();
    let lens = builtin::isotropic_index(0.5, 1.0, 2).unwrap();
    let interface = builtin::graded_interface(1.0, 1.5, 0.01).unwrap();
    let cases: [(&str, GeodesicFan, f64, f64, f64); 4] = [
        (
            "flat",
            trace_fan(&euclidean, &[0.0, 0.0], 8, Formulation::AlphaForm, 1e-3, 1.0, None)
                .unwrap(),
            0.25,
            0.75,
            1e-10,
        ),
        (
            "half-plane",
            trace_fan(&poincare, &[0.0, 1.0], 16, Formulation::AlphaForm, 1e-3, 0.85, None)
                .unwrap(),
            0.2,
            0.8,
            1e-6,
        ),
        (
            "lens",
            trace_fan(&lens, &[-1.5, 0.0], 16, Formulation::AlphaForm, 1e-3, 1.6, None).unwrap(),
            0.5,
            1.5,
            1e-5,
        ),
        (
            "interface",
            trace_fan(
                &interface,
                &[0.0, -0.005],
                16,
                Formulation::AlphaForm,
                1e-3,
                0.5,
                None,
            )
            .unwrap(),
            0.1,
            0.4,
            1e-5,
        ),
    ];
    for (name, fan, s_a, s_b, pinned) in &cases {
        let dev = equal_increment_check(fan, *s_a, *s_b).unwrap();
        assert!(dev <= *pinned, "{name}: deviation {dev:.3e} above {pinned:.0e}");
        let generic = 4.0 * fan_alpha_max(fan) * fan.h;
        assert!(dev <= generic, "{name}: deviation {dev:.3e} above 4*alpha_max*h");
    }
}

#[test]
fn alignment_angle_shrinks_as_the_fan_doubles() {
    let poincare = builtin::poincare_half_plane().unwrap();
    let lens = builtin::isotropic_index(0.5, 1.0, 2).unwrap();
    for (name, m, source) in [
        ("half-plane", &poincare, [0.0, 1.0]),
        ("lens", &lens, [-1.5, 0.0]),
    ] {
        let mut angles = Vec::new();
        for count in [64usize, 128, 256] {
            let fan =
                trace_fan(m, &source, count, Formulation::AlphaForm, 1e-3, 0.6, None).unwrap();
            angles.push(gradient_alignment_check(m, &fan, 0.5).unwrap());
        }
        for pair in angles.windows(2) {
            assert!(
                pair[1] <= 0.7 * pair[0],
                "{name}: refinement stalled, {:.3e} -> {:.3e}",
                pair[0],
                pair[1]
            );
        }
        assert!(angles[2] <= 1e-2, "{name}: {:.3e} rad at 256 rays", angles[2]);
    }
}

#[test]
fn wavefronts_touch_every_huygens_disc_without_cutting_in() {
    let poincare = builtin::poincare_half_plane().unwrap();
    let lens = builtin::isotropic_index(0.5, 1.0, 2).unwrap();
    for (name, m, source, s1, s2, max_s) in [
        ("half-plane", &poincare, [0.0, 1.0], 0.5, 0.52, 0.55),
        ("lens", &lens, [-1.5, 0.0], 1.0, 1.02, 1.1),
    ] {
        let fan = trace_fan(m, &source, 64, Formulation::AlphaForm, 1e-3, max_s, None).unwrap();
        let report = huygens_tangency_check(&fan, s1, s2).unwrap();
        assert_eq!(report.penetrations, 0, "{name}: {report}");
        assert_eq!(report.tangencies, 64, "{name}: {report}");
        assert!(report.passed, "{name}: {report}");
    }
}

#[test]
fn pair_estimates_converge_linearly_in_the_probe_scale() {
    let poincare = builtin::poincare_half_plane().unwrap();
    let est = pair_turning_rate(&poincare, &[0.0, 1.0], &[1.0, 0.0], 1e-3, 1e-3).unwrap();
    assert!((est.estimate - 1.0).abs() <= 2e-3, "{est}");
    assert!((est.reference - 1.0).abs() <= 1e-12, "{est}");

    let lens = builtin::isotropic_index(0.5, 1.0, 2).unwrap();
    let e = (-1.0f64).exp();
    let lens_expect = e / (1.0 + 0.5 * e); // |dn/dx| / n at (1, 0)
    let est = pair_turning_rate(&lens, &[1.0, 0.0], &[0.0, 1.0], 1e-4, 1e-4).unwrap();
    assert!((est.estimate - lens_expect).abs() <= 1e-3, "{est}");

    for (m, x, u, scale0) in [
        (&poincare, [0.0, 1.0], [1.0, 0.0], 1e-3),
        (&lens, [1.0, 0.0], [0.0, 1.0], 1e-4),
    ] {
        let errs: Vec<f64> = (0..4)
            .map(|k| {
                let scale = scale0 / (1 << k) as f64;
                pair_turning_rate(m, &x, &u, scale, scale).unwrap().abs_error
            })
            .collect();
        let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        let mean = orders.iter().sum::<f64>() / orders.len() as f64;
        assert!(mean >= 0.9, "mean halving order {mean:.3} from errors {errs:?}");
        // halving both probe scales must cut the error to 0.6x or better
        assert!(errs[1] <= 0.6 * errs[0], "{:.3e} -> {:.3e}", errs[0], errs[1]);
    }
}

#[test]
fn repeated_fans_are_bitwise_identical() {
    let lens = builtin::isotropic_index(0.5, 1.0, 2).unwrap();
    let run =
        || trace_fan(&lens, &[-1.5, 0.0], 16, Formulation::AlphaForm, 1e-3, 1.0, None).unwrap();
    let a = run();
    let b = run();
    for (ta, tb) in a.traces.iter().zip(&b.traces) {
        assert_eq!(ta.samples.len(), tb.samples.len());
        for (sa, sb) in ta.samples.iter().zip(&tb.samples) {
            assert_eq!(sa.r.to_bits(), sb.r.to_bits());
            assert_eq!(sa.s.to_bits(), sb.s.to_bits());
            for (xa, xb) in sa.x.iter().zip(&sb.x) {
                assert_eq!(xa.to_bits(), xb.to_bits());
            }
            for (ua, ub) in sa.u.iter().zip(&sb.u) {
                assert_eq!(ua.to_bits(), ub.to_bits());
            }
        }
    }
}
