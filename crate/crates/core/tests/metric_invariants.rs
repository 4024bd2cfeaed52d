//! Cross-checks between the analytic metric derivatives, their
//! finite-difference counterparts, and the connection coefficients built
//! from them, sampled over fixed boxes with a fixed seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhotrace_core::builtin::{self, GridField};
use rhotrace_core::metric::MetricField;

const SAMPLES: usize = 100;

fn sample_points(rng: &mut ChaCha8Rng, boxes: &[(f64, f64)]) -> Vec<Vec<f64>> {
    (0..SAMPLES)
        .map(|_| boxes.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect())
        .collect()
}

fn max_fd_gap(m: &MetricField, points: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for x in points {
        let analytic = m.derivatives(x).unwrap();
        let fd = m.finite_difference_derivatives(x).unwrap();
        worst = worst.max(analytic.max_abs_diff(&fd));
    }
    worst
}

#[test]
fn analytic_derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sphere = builtin::sphere(1e-6).unwrap();
    let gap = max_fd_gap(
        &sphere,
        &sample_points(&mut rng, &[(0.3, std::f64::consts::PI - 0.3), (-3.1, 3.1)]),
    );
    assert!(gap <= 1e-6, "sphere gap {gap:.3e}");

    let half_plane = builtin::poincare_half_plane().unwrap();
    let gap = max_fd_gap(
        &half_plane,
        &sample_points(&mut rng, &[(-2.0, 2.0), (0.5, 5.0)]),
    );
    assert!(gap <= 1e-6, "half-plane gap {gap:.3e}");

    let lens = builtin::isotropic_index(0.5, 1.0, 2).unwrap();
    let gap = max_fd_gap(&lens, &sample_points(&mut rng, &[(-2.0, 2.0), (-2.0, 2.0)]));
    assert!(gap <= 1e-6, "lens gap {gap:.3e}");
}

#[test]
fn steep_interface_derivatives_stay_close_to_differences() {
    // tanh profile of width 0.01: the third derivative is ~1e6, so the
    // second-order stencil at h=1e-5 is only good to ~1e-4 here
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let interface = builtin::graded_interface(1.0, 1.5, 0.01).unwrap();
    let gap = max_fd_gap(
        &interface,
        &sample_points(&mut rng, &[(-0.04, 0.04), (-1.0, 1.0)]),
    );
    assert!(gap <= 1e-3, "interface gap {gap:.3e}");
}

#[test]
fn connection_reproduces_the_metric_derivatives() {
    // metric compatibility: d rho_ij / d x_k = sum_m (G^m_ki rho_mj + G^m_kj rho_mi)
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cases: Vec<(MetricField, Vec<(f64, f64)>)> = vec![
        (
            builtin::sphere(1e-6).unwrap(),
            vec![(0.3, std::f64::consts::PI - 0.3), (-3.1, 3.1)],
        ),
        (
            builtin::poincare_half_plane().unwrap(),
            vec![(-2.0, 2.0), (0.5, 5.0)],
        ),
        (
            builtin::isotropic_index(0.5, 1.0, 2).unwrap(),
            vec![(-2.0, 2.0), (-2.0, 2.0)],
        ),
    ];
    for (m, boxes) in &cases {
        let n = m.dim();
        for x in sample_points(&mut rng, boxes) {
            let rho = m.eval(&x).unwrap();
            let d = m.derivatives(&x).unwrap();
            let gamma = m.christoffel(&x).unwrap();
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        let mut rebuilt = 0.0;
                        for mm in 0..n {
                            rebuilt += gamma.get(mm, k, i) * rho.get(mm, j)
                                + gamma.get(mm, k, j) * rho.get(mm, i);
                        }
                        let gap = (d.get(i, j, k) - rebuilt).abs();
                        assert!(
                            gap <= 1e-8,
                            "{}: compatibility residual {gap:.3e} at {x:?} (i={i} j={j} k={k})",
                            m.label()
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn grid_metric_differences_match_the_cell_slope() {
    // 2x2 grid over [0,1]^2, bilinear n(x,y); inside one cell the axis
    // derivative of n is linear in the other coordinate, so the second-order
    // stencil is exact up to roundoff
    let text = "GRID 2 2 2 0 1 0 1\n1.0 1.2\n1.4 1.6\n";
    let grid = GridField::parse(text, "inline").unwrap();
    let m = builtin::grid_index_from(grid).unwrap();
    let x = [0.25, 0.75];
    // n = 1 + 0.2*x2 + 0.4*x1 (row-major: last axis fastest)
    let n_val = 1.0 + 0.2 * x[1] + 0.4 * x[0];
    let rho = m.eval(&x).unwrap();
    assert!((rho.get(0, 0) - n_val * n_val).abs() <= 1e-12);
    let d = m.derivatives(&x).unwrap();
    // d(n^2)/dx1 = 2 n dn/dx1 = 2 n * 0.4
    assert!((d.get(0, 0, 0) - 2.0 * n_val * 0.4).abs() <= 1e-8);
    assert!((d.get(1, 1, 1) - 2.0 * n_val * 0.2).abs() <= 1e-8);
    // off-diagonal stays zero for an isotropic field
    assert_eq!(d.get(0, 1, 0), 0.0);
}

#[test]
fn derivative_sampling_is_reproducible() {
    let m = builtin::isotropic_index(0.5, 1.0, 2).unwrap();
    let x = [0.37, -0.81];
    let a = m.finite_difference_derivatives(&x).unwrap();
    let b = m.finite_difference_derivatives(&x).unwrap();
    assert_eq!(a.max_abs_diff(&b), 0.0);
}
