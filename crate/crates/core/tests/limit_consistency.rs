//! Cross-variant consistency of the limit energy: the general evaluator
//! against the printed and re-derived closed forms, and the reduced
//! functionals against their residual operators.

use filmreduce_core::elasticity::MaterialParams;
use filmreduce_core::expansion::BoundaryCondition;
use filmreduce_core::geometry::{Chart, Domain};
use filmreduce_core::grid::{Field2D, Grid2D};
use filmreduce_core::harness::random_membrane_state;
use filmreduce_core::limit_energy::{
    el_residual, j0_general, j0_specialized, j1_planar, reduced_functional, EnergyVariant,
    FrozenData, MembraneState,
};
use filmreduce_core::tensor3::QuadraticForm3;
use nalgebra::Vector3;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

fn cylinder(r: f64) -> Chart {
    Chart::cylinder(r, Domain::new((0.0, 1.0), (0.0, FRAC_PI_2)).unwrap()).unwrap()
}

fn sphere() -> Chart {
    Chart::sphere_band(Domain::new((FRAC_PI_4, 3.0 * FRAC_PI_4), (0.0, FRAC_PI_2)).unwrap())
        .unwrap()
}

#[test]
fn identity_recovery_is_zero_on_all_charts() {
    for chart in [
        Chart::planar(Domain::new((0.0, 1.0), (0.0, 1.0)).unwrap()),
        cylinder(2.0),
        sphere(),
    ] {
        let grid = Grid2D::new(33, 33, chart.domain).unwrap();
        let state = MembraneState::identity_recovery(&chart, grid);
        let j = j0_general(
            &state,
            &chart,
            &MaterialParams::default(),
            &QuadraticForm3::frobenius(),
        )
        .unwrap();
        assert!(j.total.abs() <= 1e-10, "{}: {}", chart.describe(), j.total);
    }
}

#[test]
fn derived_forms_match_general_on_random_states() {
    let mat = MaterialParams::new(1.2, 0.7).unwrap();
    let q = QuadraticForm3::frobenius();
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    for chart in [cylinder(2.0), cylinder(0.7), sphere()] {
        let grid = Grid2D::new(17, 17, chart.domain).unwrap();
        for _ in 0..10 {
            let state = random_membrane_state(&chart, grid, 0.08, &mut rng);
            let general = j0_general(&state, &chart, &mat, &q).unwrap();
            let derived =
                j0_specialized(&state, &chart, &mat, &q, EnergyVariant::DerivedFromGeneral)
                    .unwrap();
            assert!(
                (general.total - derived.total).abs() <= 1e-8 * (1.0 + general.total.abs()),
                "{}: general {} vs derived {}",
                chart.describe(),
                general.total,
                derived.total
            );
            // The split must agree part by part, not only in total.
            assert!(
                (general.membrane - derived.membrane).abs()
                    <= 1e-8 * (1.0 + general.membrane.abs())
            );
            assert!(
                (general.second_order - derived.second_order).abs()
                    <= 1e-8 * (1.0 + general.second_order.abs())
            );
        }
    }
}

#[test]
fn printed_cylinder_deviation_localizes_to_metric_factors() {
    let mat = MaterialParams::new(1.0, 1.0).unwrap();
    let q = QuadraticForm3::frobenius();
    let mut rng = ChaCha8Rng::seed_from_u64(302);

    // At r = 1 the printed and contravariant metric factors coincide.
    let chart = cylinder(1.0);
    let grid = Grid2D::new(17, 17, chart.domain).unwrap();
    for _ in 0..10 {
        let state = random_membrane_state(&chart, grid, 0.08, &mut rng);
        let general = j0_general(&state, &chart, &mat, &q).unwrap().total;
        let printed = j0_specialized(&state, &chart, &mat, &q, EnergyVariant::AsPrinted)
            .unwrap()
            .total;
        assert!((general - printed).abs() <= 1e-8 * (1.0 + general.abs()));
    }

    // At r != 1 the printed membrane part misses the identity state by the
    // hand-derived constant (lambda/4 + mu/2)(r-1)^2 |omega| r.
    let r = 2.0;
    let chart = cylinder(r);
    let grid = Grid2D::new(17, 17, chart.domain).unwrap();
    let state = MembraneState::identity_recovery(&chart, grid);
    let printed = j0_specialized(&state, &chart, &mat, &q, EnergyVariant::AsPrinted).unwrap();
    let predicted =
        (mat.lambda / 4.0 + mat.mu / 2.0) * (r - 1.0) * (r - 1.0) * chart.domain.area() * r;
    assert!((printed.total - predicted).abs() <= 1e-8 * (1.0 + predicted));
    assert!(j0_general(&state, &chart, &mat, &q).unwrap().total.abs() <= 1e-10);
}

#[test]
fn zero_transverse_curvature_is_optimal_in_w() {
    // The limit energy is quadratic in w with positive diagonal weight, so
    // w = 0 beats any nonzero constant w for states that already solve w = 0.
    let chart = cylinder(2.0);
    let grid = Grid2D::new(17, 17, chart.domain).unwrap();
    let state = MembraneState::identity_recovery(&chart, grid);
    let mat = MaterialParams::default();
    let q = QuadraticForm3::frobenius();
    let base = j0_general(&state, &chart, &mat, &q).unwrap().total;
    let w = Field2D::constant(grid, Vector3::new(0.1, -0.05, 0.2));
    let bumped = MembraneState::new(state.phi0.clone(), state.u.clone(), Some(w)).unwrap();
    let with_w = j0_general(&bumped, &chart, &mat, &q).unwrap().total;
    assert!(with_w > base + 1e-6);
}

#[test]
fn planar_two_field_energy_drops_the_w_slot() {
    let chart = Chart::planar(Domain::new((0.0, 1.0), (0.0, 1.0)).unwrap());
    let grid = Grid2D::new(17, 17, chart.domain).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let state = random_membrane_state(&chart, grid, 0.08, &mut rng);
    let mat = MaterialParams::default();
    let q = QuadraticForm3::frobenius();
    let with_w = MembraneState::new(
        state.phi0.clone(),
        state.u.clone(),
        Some(Field2D::constant(grid, Vector3::new(0.3, 0.0, 0.1))),
    )
    .unwrap();
    let j1 = j1_planar(&with_w, &mat, &q).unwrap();
    let j0_no_w = j0_specialized(&state, &chart, &mat, &q, EnergyVariant::AsPrinted)
        .unwrap()
        .total;
    assert!((j1 - j0_no_w).abs() <= 1e-12 * (1.0 + j0_no_w.abs()));
}

#[test]
fn gradient_density_integrates_to_directional_derivative() {
    // <el_residual.gradient_density, v>_w equals the finite-difference
    // directional derivative of the reduced functional for interior bumps.
    let mat = MaterialParams::new(1.1, 0.6).unwrap();
    for chart in [
        Chart::planar(Domain::new((0.0, 1.0), (0.0, 1.0)).unwrap()),
        cylinder(2.0),
        sphere(),
    ] {
        let grid = Grid2D::new(17, 17, chart.domain).unwrap();
        let state = MembraneState::identity_recovery(&chart, grid);
        let frozen = FrozenData::from_state(&state);
        let u = Field2D::from_fn(grid, |x1, x2| {
            chart.a3(x1, x2) + Vector3::new(0.07 * (2.0 * x1).sin(), -0.03 * x2 * x2, 0.05 * x1)
        });
        let res = el_residual(&chart, &u, &frozen, &mat, &BoundaryCondition::identity()).unwrap();
        let d = chart.domain;
        let v = Field2D::from_fn(grid, |x1, x2| {
            let b1 = (x1 - d.x1.0) * (d.x1.1 - x1) / (d.len1() * d.len1());
            let b2 = (x2 - d.x2.0) * (d.x2.1 - x2) / (d.len2() * d.len2());
            b1 * b2 * Vector3::new(0.8, -0.6, 1.0)
        });
        let mut inner = 0.0;
        for (i, j) in grid.nodes() {
            if grid.is_boundary(i, j) {
                continue;
            }
            let (x1, _) = grid.coord(i, j);
            let w = grid.weight(i, j)
                * filmreduce_core::limit_energy::reduced_measure(&chart, x1).unwrap();
            inner += w * res.gradient_density[grid.index(i, j)].dot(&v.value(i, j));
        }
        let eps = 1e-6;
        let perturb = |sign: f64| {
            let mut f = u.clone();
            for (i, j) in grid.nodes() {
                if !grid.is_boundary(i, j) {
                    f.values[grid.index(i, j)] += sign * eps * v.value(i, j);
                }
            }
            reduced_functional(&chart, &f, &frozen, &mat).unwrap()
        };
        let fd = (perturb(1.0) - perturb(-1.0)) / (2.0 * eps);
        assert!(
            (inner - fd).abs() <= 1e-6 * (1.0 + inner.abs().max(fd.abs())),
            "{}: inner {} vs fd {}",
            chart.describe(),
            inner,
            fd
        );
    }
}

#[test]
fn printed_pde_is_the_exact_discrete_gradient_where_it_should_be() {
    // The staggered gradient quadrature makes the tight second-difference
    // operator the exact adjoint: for the planar chart (any frozen data) and
    // the cylinder with constant frozen data, the printed PDE display IS the
    // discrete gradient density at interior nodes.
    let mat = MaterialParams::new(1.1, 0.9).unwrap();
    let planar = Chart::planar(Domain::new((0.0, 1.0), (0.0, 1.0)).unwrap());
    let grid = Grid2D::new(17, 17, planar.domain).unwrap();
    let frozen = {
        let mut f = FrozenData::constant(grid, Vector3::x(), Vector3::y(), Vector3::zeros());
        for (i, j) in grid.nodes() {
            let (x1, x2) = grid.coord(i, j);
            let idx = grid.index(i, j);
            f.a[idx] = Vector3::x() + 0.1 * Vector3::new(x2.sin(), x1, x1 * x2);
            f.b[idx] = Vector3::y() + 0.1 * Vector3::new(x1 * x1, x2, (x1 + x2).cos());
        }
        f
    };
    let u = Field2D::from_fn(grid, |x1, x2| {
        Vector3::z() + 0.1 * Vector3::new((2.0 * x1).sin() * x2, x1 * x1, (x1 + x2).cos())
    });
    let res = el_residual(&planar, &u, &frozen, &mat, &BoundaryCondition::identity()).unwrap();
    for (i, j) in grid.nodes() {
        if !grid.is_boundary(i, j) {
            let idx = grid.index(i, j);
            assert!(
                (res.pde[idx] - res.gradient_density[idx]).norm() <= 1e-11,
                "planar at ({i},{j})"
            );
        }
    }

    let cyl = cylinder(2.0);
    let grid = Grid2D::new(17, 17, cyl.domain).unwrap();
    let frozen = FrozenData::constant(
        grid,
        Vector3::x(),
        Vector3::new(0.0, -2.0, 0.0),
        Vector3::zeros(),
    );
    let u = Field2D::from_fn(grid, |x1, x2| {
        cyl.a3(x1, x2) + 0.05 * Vector3::new(x2, x1 * x1, (2.0 * x2).sin())
    });
    let res = el_residual(&cyl, &u, &frozen, &mat, &BoundaryCondition::identity()).unwrap();
    for (i, j) in grid.nodes() {
        if !grid.is_boundary(i, j) {
            let idx = grid.index(i, j);
            assert!(
                (res.pde[idx] - res.gradient_density[idx]).norm() <= 1e-11,
                "cylinder at ({i},{j}): gap {}",
                (res.pde[idx] - res.gradient_density[idx]).norm()
            );
        }
    }
}
