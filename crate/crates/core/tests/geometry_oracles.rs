//! Geometry oracles: the Jacobian polynomial identity against direct
//! determinants, and the identity-based inverse-map derivatives against
//! finite differences of the closed-form inverses.

use filmreduce_core::geometry::{Chart, Domain};
use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

fn builtin_charts() -> Vec<Chart> {
    vec![
        Chart::planar(Domain::new((0.0, 1.0), (0.0, 1.0)).unwrap()),
        Chart::cylinder(2.0, Domain::new((0.0, 1.0), (0.0, FRAC_PI_2)).unwrap()).unwrap(),
        Chart::sphere_band(Domain::new((FRAC_PI_4, 3.0 * FRAC_PI_4), (0.0, FRAC_PI_2)).unwrap())
            .unwrap(),
    ]
}

fn random_point(chart: &Chart, rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    let d = chart.domain;
    (
        rng.gen_range(d.x1.0..d.x1.1),
        rng.gen_range(d.x2.0..d.x2.1),
        rng.gen_range(-0.5..0.5),
    )
}

#[test]
fn jacobian_polynomial_identity_random_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for chart in builtin_charts() {
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let (x1, x2, x3) = random_point(&chart, &mut rng);
            let h = rng.gen_range(0.01..0.5);
            let jc = chart.jacobian_coeffs(x1, x2, x3);
            let det = chart.grad_psi(x1, x2, h * x3).determinant();
            worst = worst.max((jc.eval(h) - det).abs());
        }
        assert!(worst <= 1e-10, "{}: worst = {worst:e}", chart.describe());
    }
}

#[test]
fn printed_leading_coefficients() {
    let charts = builtin_charts();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..50 {
        let (x1, x2, x3) = random_point(&charts[1], &mut rng);
        assert_eq!(charts[1].jacobian_coeffs(x1, x2, x3).c0, 2.0);
    }
    for _ in 0..50 {
        let (x1, x2, x3) = random_point(&charts[2], &mut rng);
        assert_eq!(charts[2].jacobian_coeffs(x1, x2, x3).c0, x1.sin());
    }
}

use filmreduce_core::oracles::fd_inverse_derivs;

#[test]
fn inverse_derivs_match_closed_form_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for chart in &builtin_charts()[1..] {
        let mut worst1: f64 = 0.0;
        let mut worst2: f64 = 0.0;
        for _ in 0..50 {
            let d = chart.domain;
            // Stay off the domain edges so the FD cube remains in range.
            let x1 = rng.gen_range(d.x1.0 + 0.05..d.x1.1 - 0.05);
            let x2 = rng.gen_range(d.x2.0 + 0.05..d.x2.1 - 0.05);
            let t = rng.gen_range(-0.1..0.1);
            let inv = chart.inv_derivs(x1, x2, t).unwrap();
            let z = chart.psi_fat(x1, x2, t);
            let (fd1, fd2) = fd_inverse_derivs(chart, &z, 1e-5);
            worst1 = worst1.max((inv.d1 - fd1).norm());
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        worst2 = worst2.max((inv.d2.get(k, i, j) - fd2[3 * i + j][k]).abs());
                    }
                }
            }
        }
        assert!(worst1 <= 1e-7, "{}: D1 error {worst1:e}", chart.describe());
        assert!(worst2 <= 1e-7, "{}: D2 error {worst2:e}", chart.describe());
    }
}

#[test]
fn inverse_derivs_structural_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for chart in builtin_charts() {
        for _ in 0..30 {
            let (x1, x2, x3) = random_point(&chart, &mut rng);
            let t = 0.25 * x3;
            let inv = chart.inv_derivs(x1, x2, t).unwrap();
            let grad = chart.grad_psi(x1, x2, t);
            assert!((inv.d1 * grad - Matrix3::identity()).norm() <= 1e-10);
            for k in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        assert!((inv.d2.get(k, i, j) - inv.d2.get(k, j, i)).abs() <= 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn equator_and_axis_reference_points() {
    // Cylinder r = 2 at x2 = 0, t = 0: the closed-form inverse
    // (z1, atan2(z3, z2), r - sqrt(z2^2 + z3^2)) differentiates to the
    // identity-based derivatives.
    let cyl = &builtin_charts()[1];
    let inv = cyl.inv_derivs(0.5, 0.0, 0.0).unwrap();
    let (fd1, _) = fd_inverse_derivs(cyl, &Vector3::new(0.5, 2.0, 0.0), 1e-5);
    assert!((inv.d1 - fd1).norm() < 1e-8);

    let sph = &builtin_charts()[2];
    let inv = sph.inv_derivs(FRAC_PI_2, 0.3, 0.0).unwrap();
    let z = sph.psi_fat(FRAC_PI_2, 0.3, 0.0);
    let (fd1, fd2) = fd_inverse_derivs(sph, &z, 1e-5);
    assert!((inv.d1 - fd1).norm() < 1e-8);
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                worst = worst.max((inv.d2.get(k, i, j) - fd2[3 * i + j][k]).abs());
            }
        }
    }
    assert!(worst < 1e-8, "D2 error {worst:e}");
}
