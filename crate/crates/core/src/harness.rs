//! End-to-end numerical validation: truncation-order fits of the expansion
//! against direct evaluation, the dimension-reduction limit check, and the
//! cross-variant consistency report.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::elasticity::MaterialParams;
use crate::error::{Error, Result};
use crate::expansion::{term_energies, DeformationExpansion};
use crate::geometry::Chart;
use crate::grid::{Field2D, Field3D, Grid2D, Grid3D, Jet3D};
use crate::limit_energy::{j0_general, j0_specialized, EnergyVariant, MembraneState};
use crate::rescaled_energy::{energy_j, EvalContext};
use crate::tensor3::QuadraticForm3;

/// Geometric thickness schedule `h_k = h0 rho^k`, `k = 0..count`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HSchedule {
    pub h0: f64,
    pub rho: f64,
    pub count: usize,
}

impl Default for HSchedule {
    fn default() -> Self {
        HSchedule {
            h0: 0.125,
            rho: 0.5,
            count: 6,
        }
    }
}

impl HSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.h0 > 0.0) || !(self.rho > 0.0 && self.rho < 1.0) || self.count < 1 {
            return Err(Error::invalid(
                "schedule",
                "need h0 > 0, rho in (0, 1), count >= 1",
            ));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count)
            .map(|k| self.h0 * self.rho.powi(k as i32))
            .collect()
    }
}

/// One thickness sample of a two-route comparison.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FitRow {
    pub h: f64,
    pub direct: f64,
    pub model: f64,
    pub residual: f64,
}

/// Log-log least-squares fit of residual against thickness.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub rows: Vec<FitRow>,
    pub slope: f64,
    pub intercept: f64,
    /// RMS deviation of the fit in log10 units.
    pub fit_residual: f64,
}

fn fit_loglog(rows: &[FitRow]) -> Result<FitReport> {
    if rows.len() < 4 {
        return Err(Error::invalid(
            "fit",
            format!("need >= 4 thickness points, got {}", rows.len()),
        ));
    }
    let scale = 1.0 + rows.iter().map(|r| r.direct.abs()).fold(0.0, f64::max);
    let max_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    if max_residual <= 1e-14 * scale {
        return Err(Error::DegenerateFit { max_residual });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.h.log10(), r.residual.max(1e-300).log10()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let ss: f64 = pts
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum();
    Ok(FitReport {
        rows: rows.to_vec(),
        slope,
        intercept,
        fit_residual: (ss / n).sqrt(),
    })
}

/// Compares the direct energy of the resummed expansion against the truncated
/// term-energy series `sum_{n<=max_order} J^n_h h^n` over the schedule, and
/// fits the decay order of the truncation error.
pub fn series_fit(
    exp: &DeformationExpansion,
    chart: &Chart,
    mat: &MaterialParams,
    qform: &QuadraticForm3,
    sched: &HSchedule,
    max_order: i32,
) -> Result<FitReport> {
    sched.validate()?;
    let mut rows = Vec::with_capacity(sched.count);
    for h in sched.values() {
        let ctx = EvalContext::new(chart, exp.grid(), mat.clone(), qform.clone(), h)?;
        let direct = energy_j(&exp.sum_at(h), &ctx).total;
        let series = term_energies(exp, &ctx, max_order).sum_at(h);
        rows.push(FitRow {
            h,
            direct,
            model: series,
            residual: (direct - series).abs(),
        });
    }
    fit_loglog(&rows)
}

/// Lift of a membrane state into the unit cylinder:
/// `phi^0(x1, x2)`, `phi^1 = x3 u(x1, x2)`, `phi^2` with vanishing transverse
/// second derivative (zero by default). Jets survive when the state has them.
pub fn lift_state(state: &MembraneState, grid: Grid3D) -> Result<DeformationExpansion> {
    if state.grid() != grid.plane() {
        return Err(Error::invalid(
            "lift",
            "state grid must match the in-plane 3D grid",
        ));
    }
    let phi0 = lift_const(&state.phi0, grid);
    let phi1 = lift_linear(&state.u, grid);
    let phi2 = match &state.w {
        // w = phi^2_,33 is carried as x3^2/2 w, which has exactly that
        // transverse second derivative at every node of a uniform grid.
        Some(w) => {
            let mut f = Field3D::zeros(grid);
            for (i, j, k) in grid.nodes() {
                let (_, _, x3) = grid.coord(i, j, k);
                f.values[grid.index(i, j, k)] = 0.5 * x3 * x3 * w.value(i, j);
            }
            f
        }
        None => {
            let mut z = Field3D::zeros(grid);
            if state.phi0.jet.is_some() && state.u.jet.is_some() {
                z.jet = Some(Jet3D {
                    d1: vec![[Vector3::zeros(); 3]; grid.node_count()],
                    d2: vec![[Vector3::zeros(); 6]; grid.node_count()],
                });
            }
            z
        }
    };
    DeformationExpansion::new(vec![phi0, phi1, phi2])
}

fn lift_const(f: &Field2D, grid: Grid3D) -> Field3D {
    let g2 = f.grid;
    let n = grid.node_count();
    let mut out = Field3D::zeros(grid);
    for (i, j, k) in grid.nodes() {
        out.values[grid.index(i, j, k)] = f.value(i, j);
    }
    if let Some(jet) = &f.jet {
        let mut d1 = vec![[Vector3::zeros(); 3]; n];
        let mut d2 = vec![[Vector3::zeros(); 6]; n];
        for (i, j, k) in grid.nodes() {
            let idx3 = grid.index(i, j, k);
            let idx2 = g2.index(i, j);
            d1[idx3][0] = jet.d1[idx2][0];
            d1[idx3][1] = jet.d1[idx2][1];
            d2[idx3][0] = jet.d2[idx2][0];
            d2[idx3][1] = jet.d2[idx2][1];
            d2[idx3][3] = jet.d2[idx2][2];
        }
        out.jet = Some(Jet3D { d1, d2 });
    }
    out
}

fn lift_linear(f: &Field2D, grid: Grid3D) -> Field3D {
    let g2 = f.grid;
    let n = grid.node_count();
    let mut out = Field3D::zeros(grid);
    for (i, j, k) in grid.nodes() {
        let (_, _, x3) = grid.coord(i, j, k);
        out.values[grid.index(i, j, k)] = x3 * f.value(i, j);
    }
    if let Some(jet) = &f.jet {
        let mut d1 = vec![[Vector3::zeros(); 3]; n];
        let mut d2 = vec![[Vector3::zeros(); 6]; n];
        for (i, j, k) in grid.nodes() {
            let (_, _, x3) = grid.coord(i, j, k);
            let idx3 = grid.index(i, j, k);
            let idx2 = g2.index(i, j);
            d1[idx3][0] = x3 * jet.d1[idx2][0];
            d1[idx3][1] = x3 * jet.d1[idx2][1];
            d1[idx3][2] = f.values[idx2];
            d2[idx3][0] = x3 * jet.d2[idx2][0];
            d2[idx3][1] = x3 * jet.d2[idx2][1];
            d2[idx3][3] = x3 * jet.d2[idx2][2];
            d2[idx3][2] = jet.d1[idx2][0];
            d2[idx3][4] = jet.d1[idx2][1];
        }
        out.jet = Some(Jet3D { d1, d2 });
    }
    out
}

/// Recovery-sequence check of the dimension-reduction limit: evaluates
/// `|J(h)(lifted state) - J^0(state)|` over the schedule and fits the decay
/// order (first order in `h` is the passing expectation).
pub fn gamma_limit_check(
    state: &MembraneState,
    chart: &Chart,
    mat: &MaterialParams,
    qform: &QuadraticForm3,
    grid: Grid3D,
    sched: &HSchedule,
) -> Result<FitReport> {
    sched.validate()?;
    let exp = lift_state(state, grid)?;
    let j0 = j0_general(state, chart, mat, qform)?.total;
    let mut rows = Vec::with_capacity(sched.count);
    for h in sched.values() {
        let ctx = EvalContext::new(chart, grid, mat.clone(), qform.clone(), h)?;
        let direct = energy_j(&exp.sum_at(h), &ctx).total;
        rows.push(FitRow {
            h,
            direct,
            model: j0,
            residual: (direct - j0).abs(),
        });
    }
    fit_loglog(&rows)
}

/// One sampled state's limit-energy values under the three evaluation routes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConsistencyRow {
    pub sample: usize,
    pub general: f64,
    pub printed: f64,
    pub derived: f64,
    pub diff_general_printed: f64,
    pub diff_general_derived: f64,
    pub diff_printed_derived: f64,
}

/// Cross-variant audit over random smooth states.
#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub rows: Vec<ConsistencyRow>,
    pub max_general_printed: f64,
    pub max_general_derived: f64,
    pub max_printed_derived: f64,
}

pub fn consistency_report(
    chart: &Chart,
    mat: &MaterialParams,
    qform: &QuadraticForm3,
    grid: Grid2D,
    n_samples: usize,
    amplitude: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ConsistencyReport> {
    let mut rows = Vec::with_capacity(n_samples);
    let (mut m_gp, mut m_gd, mut m_pd) = (0.0_f64, 0.0_f64, 0.0_f64);
    for sample in 0..n_samples {
        let state = random_membrane_state(chart, grid, amplitude, rng);
        let general = j0_general(&state, chart, mat, qform)?.total;
        let printed = j0_specialized(&state, chart, mat, qform, EnergyVariant::AsPrinted)?.total;
        let derived =
            j0_specialized(&state, chart, mat, qform, EnergyVariant::DerivedFromGeneral)?.total;
        let row = ConsistencyRow {
            sample,
            general,
            printed,
            derived,
            diff_general_printed: (general - printed).abs(),
            diff_general_derived: (general - derived).abs(),
            diff_printed_derived: (printed - derived).abs(),
        };
        m_gp = m_gp.max(row.diff_general_printed);
        m_gd = m_gd.max(row.diff_general_derived);
        m_pd = m_pd.max(row.diff_printed_derived);
        rows.push(row);
    }
    Ok(ConsistencyReport {
        rows,
        max_general_printed: m_gp,
        max_general_derived: m_gd,
        max_printed_derived: m_pd,
    })
}

/// Smooth random scalar bump built from a few low-order trigonometric modes,
/// vanishing on the boundary of the rectangle.
fn random_bump(domain: &crate::geometry::Domain, rng: &mut ChaCha8Rng) -> impl Fn(f64, f64) -> f64 {
    let l1 = domain.len1();
    let l2 = domain.len2();
    let (a1, b1) = (domain.x1.0, domain.x2.0);
    let mut modes = Vec::new();
    for m in 1..=2 {
        for n in 1..=2 {
            modes.push((m as f64, n as f64, rng.gen_range(-1.0..1.0)));
        }
    }
    move |x1: f64, x2: f64| {
        let s1 = std::f64::consts::PI * (x1 - a1) / l1;
        let s2 = std::f64::consts::PI * (x2 - b1) / l2;
        modes
            .iter()
            .map(|(m, n, c)| c * (m * s1).sin() * (n * s2).sin())
            .sum()
    }
}

/// A smooth random membrane state: the identity-recovery state plus
/// interior-supported trigonometric perturbations of size `amplitude`,
/// evaluated nodally (derivatives by stencils).
pub fn random_membrane_state(
    chart: &Chart,
    grid: Grid2D,
    amplitude: f64,
    rng: &mut ChaCha8Rng,
) -> MembraneState {
    let d = chart.domain;
    let bumps0: Vec<_> = (0..3).map(|_| random_bump(&d, rng)).collect();
    let bumps_u: Vec<_> = (0..3).map(|_| random_bump(&d, rng)).collect();
    let phi0 = Field2D::from_fn(grid, |x1, x2| {
        chart.psi(x1, x2)
            + amplitude * Vector3::new(bumps0[0](x1, x2), bumps0[1](x1, x2), bumps0[2](x1, x2))
    });
    let u = Field2D::from_fn(grid, |x1, x2| {
        chart.a3(x1, x2)
            + amplitude * Vector3::new(bumps_u[0](x1, x2), bumps_u[1](x1, x2), bumps_u[2](x1, x2))
    });
    MembraneState { phi0, u, w: None }
}

/// A random expansion satisfying the cascade constraints exactly on nodes:
/// `phi^0` independent of `x3` and `phi^1` affine in `x3`.
pub fn random_q0_expansion(
    chart: &Chart,
    grid: Grid3D,
    amplitude: f64,
    rng: &mut ChaCha8Rng,
) -> DeformationExpansion {
    let d = chart.domain;
    let b: Vec<_> = (0..9).map(|_| random_bump(&d, rng)).collect();
    let phi0 = Field3D::from_fn(grid, |x1, x2, _| {
        chart.psi(x1, x2) + amplitude * Vector3::new(b[0](x1, x2), b[1](x1, x2), b[2](x1, x2))
    });
    let phi1 = Field3D::from_fn(grid, |x1, x2, x3| {
        let base =
            chart.a3(x1, x2) + amplitude * Vector3::new(b[3](x1, x2), b[4](x1, x2), b[5](x1, x2));
        let offset = amplitude * Vector3::new(b[6](x1, x2), b[7](x1, x2), 0.0);
        x3 * base + offset
    });
    let phi2 = Field3D::from_fn(grid, |x1, x2, x3| {
        amplitude * x3 * x3 * Vector3::new(0.0, 0.0, b[8](x1, x2))
    });
    DeformationExpansion::new(vec![phi0, phi1, phi2]).expect("constructed expansion is valid")
}

/// A random expansion violating `phi^0_,3 = 0` (for the negative-order terms).
pub fn random_violating_expansion(
    chart: &Chart,
    grid: Grid3D,
    amplitude: f64,
    rng: &mut ChaCha8Rng,
) -> DeformationExpansion {
    let d = chart.domain;
    let b: Vec<_> = (0..3).map(|_| random_bump(&d, rng)).collect();
    let drift = 0.2 + 0.3 * rng.gen_range(0.0..1.0);
    let phi0 = Field3D::from_fn(grid, |x1, x2, x3| {
        chart.psi(x1, x2)
            + amplitude * Vector3::new(b[0](x1, x2), b[1](x1, x2), b[2](x1, x2))
            + drift * x3 * chart.a3(x1, x2)
    });
    let phi1 = Field3D::from_fn(grid, |x1, x2, x3| x3 * chart.a3(x1, x2));
    let phi2 = Field3D::zeros(grid);
    DeformationExpansion::new(vec![phi0, phi1, phi2]).expect("constructed expansion is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use rand_chacha::rand_core::SeedableRng;

    fn unit_domain() -> Domain {
        Domain::new((0.0, 1.0), (0.0, 1.0)).unwrap()
    }

    #[test]
    fn schedule_values_decrease() {
        let s = HSchedule::default();
        let vals = s.values();
        assert_eq!(vals.len(), 6);
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
        assert!(HSchedule {
            h0: 0.1,
            rho: 1.2,
            count: 4
        }
        .validate()
        .is_err());
    }

    #[test]
    fn fit_recovers_known_slope() {
        let rows: Vec<FitRow> = (0..6)
            .map(|k| {
                let h = 0.125 * 0.5_f64.powi(k);
                FitRow {
                    h,
                    direct: 1.0,
                    model: 1.0,
                    residual: 3.0 * h.powf(2.0),
                }
            })
            .collect();
        let fit = fit_loglog(&rows).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!(fit.fit_residual < 1e-12);
    }

    #[test]
    fn degenerate_fit_reported_as_exact() {
        let rows: Vec<FitRow> = (0..5)
            .map(|k| FitRow {
                h: 0.1 * 0.5_f64.powi(k),
                direct: 1.0,
                model: 1.0,
                residual: 1e-16,
            })
            .collect();
        assert!(matches!(
            fit_loglog(&rows),
            Err(Error::DegenerateFit { .. })
        ));
    }

    #[test]
    fn identity_lift_is_exact_for_every_h() {
        let chart = Chart::cylinder(2.0, unit_domain()).unwrap();
        let g3 = Grid3D::new(9, 9, 5, unit_domain()).unwrap();
        let state = MembraneState::identity_recovery(&chart, g3.plane());
        let exp = lift_state(&state, g3).unwrap();
        let mat = MaterialParams::default();
        let q = QuadraticForm3::frobenius();
        for h in [0.125, 0.03125] {
            let ctx = EvalContext::new(&chart, g3, mat.clone(), q.clone(), h).unwrap();
            let e = energy_j(&exp.sum_at(h), &ctx);
            assert!(e.total.abs() < 1e-12, "h={h}: {}", e.total);
        }
        let err = gamma_limit_check(&state, &chart, &mat, &q, g3, &HSchedule::default());
        assert!(matches!(err, Err(Error::DegenerateFit { .. })));
    }

    #[test]
    fn gamma_limit_first_order_on_random_planar_state() {
        let chart = Chart::planar(unit_domain());
        let g3 = Grid3D::new(9, 9, 5, unit_domain()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let state = random_membrane_state(&chart, g3.plane(), 0.05, &mut rng);
        let sched = HSchedule {
            h0: 0.125,
            rho: 0.5,
            count: 6,
        };
        let fit = gamma_limit_check(
            &state,
            &chart,
            &MaterialParams::default(),
            &QuadraticForm3::frobenius(),
            g3,
            &sched,
        )
        .unwrap();
        assert!(fit.slope >= 0.9, "slope = {}", fit.slope);
    }

    #[test]
    fn consistency_report_planar_agrees() {
        let chart = Chart::planar(unit_domain());
        let grid = Grid2D::new(9, 9, unit_domain()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let report = consistency_report(
            &chart,
            &MaterialParams::default(),
            &QuadraticForm3::frobenius(),
            grid,
            10,
            0.05,
            &mut rng,
        )
        .unwrap();
        assert!(report.max_general_printed <= 1e-10);
    }
}
