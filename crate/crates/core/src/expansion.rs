//! The asymptotic-expansion engine: strain-series and second-derivative-series
//! coefficients, the per-order term energies, and the admissibility
//! constraints of the minimization cascade.
//!
//! Orders follow the energy ladder: strain coefficients `E^n` start at
//! `n = -2`, second-derivative coefficients `d^n` start at `n = -2`, and the
//! term energies `J^n_h` start at `n = -4`. All Cauchy products are over the
//! finite truncated series, so for a given truncated deformation the identity
//! `J(h) = sum_n J^n_h h^n` holds to rounding when summed over every
//! structurally nonzero order.

use nalgebra::{Matrix3, Vector3};

use crate::elasticity::elasticity_contract;
use crate::error::{Error, Result};
use crate::geometry::{Chart, InverseDerivs};
use crate::grid::{Field3D, Grid3D};
use crate::rescaled_energy::EvalContext;
use crate::tensor3::Tensor3;

/// Truncated power series `phi^0, phi^1, ..., phi^N` of the deformation.
#[derive(Debug, Clone)]
pub struct DeformationExpansion {
    terms: Vec<Field3D>,
}

impl DeformationExpansion {
    /// Requires at least orders 0..=2 on a common grid.
    pub fn new(terms: Vec<Field3D>) -> Result<Self> {
        if terms.len() < 3 {
            return Err(Error::invalid(
                "expansion",
                format!("need order >= 2, got {} terms", terms.len()),
            ));
        }
        let grid = terms[0].grid;
        for t in &terms {
            if t.grid != grid {
                return Err(Error::invalid("expansion", "terms must share one grid"));
            }
            if !t.is_finite() {
                return Err(Error::invalid("expansion", "terms must be finite"));
            }
        }
        Ok(DeformationExpansion { terms })
    }

    pub fn order(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn terms(&self) -> &[Field3D] {
        &self.terms
    }

    pub fn grid(&self) -> Grid3D {
        self.terms[0].grid
    }

    /// Nodal sum `sum_n h^n phi^n`.
    pub fn sum_at(&self, h: f64) -> Field3D {
        let refs: Vec<&Field3D> = self.terms.iter().collect();
        let coeffs: Vec<f64> = (0..self.terms.len()).map(|n| h.powi(n as i32)).collect();
        Field3D::linear_combination(&refs, &coeffs)
    }
}

/// The identity-recovery expansion `phi^0 = psi`, `phi^1 = x3 a3`, `phi^2 = 0`
/// with exact jets; it resums to the fattening map at every thickness.
pub fn identity_recovery_expansion(chart: &Chart, grid: Grid3D) -> DeformationExpansion {
    let zero_jet = ([Vector3::zeros(); 3], [Vector3::zeros(); 6]);
    let phi0 = Field3D::from_fn_with_jet(grid, |x1, x2, _| {
        let mut d1 = [Vector3::zeros(); 3];
        d1[0] = chart.psi_d1(x1, x2, 0);
        d1[1] = chart.psi_d1(x1, x2, 1);
        let mut d2 = [Vector3::zeros(); 6];
        d2[0] = chart.psi_d2(x1, x2, 0, 0);
        d2[1] = chart.psi_d2(x1, x2, 0, 1);
        d2[3] = chart.psi_d2(x1, x2, 1, 1);
        (chart.psi(x1, x2), d1, d2)
    });
    let phi1 = Field3D::from_fn_with_jet(grid, |x1, x2, x3| {
        let mut d1 = [Vector3::zeros(); 3];
        d1[0] = x3 * chart.a3_d1(x1, x2, 0);
        d1[1] = x3 * chart.a3_d1(x1, x2, 1);
        d1[2] = chart.a3(x1, x2);
        let mut d2 = [Vector3::zeros(); 6];
        d2[0] = x3 * chart.a3_d2(x1, x2, 0, 0);
        d2[1] = x3 * chart.a3_d2(x1, x2, 0, 1);
        d2[3] = x3 * chart.a3_d2(x1, x2, 1, 1);
        d2[2] = chart.a3_d1(x1, x2, 0); // (1,3) slot
        d2[4] = chart.a3_d1(x1, x2, 1); // (2,3) slot
        (x3 * chart.a3(x1, x2), d1, d2)
    });
    let phi2 =
        Field3D::from_fn_with_jet(grid, |_, _, _| (Vector3::zeros(), zero_jet.0, zero_jet.1));
    DeformationExpansion::new(vec![phi0, phi1, phi2]).expect("identity expansion is valid")
}

/// Series of values indexed by expansion order, starting at `min_order`.
#[derive(Debug, Clone)]
pub struct OrderSeries<T> {
    min_order: i32,
    items: Vec<T>,
}

impl<T> OrderSeries<T> {
    fn new(min_order: i32, items: Vec<T>) -> Self {
        OrderSeries { min_order, items }
    }

    pub fn get(&self, n: i32) -> Option<&T> {
        if n < self.min_order {
            return None;
        }
        self.items.get((n - self.min_order) as usize)
    }

    pub fn max_order(&self) -> i32 {
        self.min_order + self.items.len() as i32 - 1
    }

    pub fn min_order(&self) -> i32 {
        self.min_order
    }
}

/// 3x3 array of vectors: one `d^n_ij`-style coefficient.
pub type VecMat = [[Vector3<f64>; 3]; 3];

fn vecmat_zero() -> VecMat {
    [[Vector3::zeros(); 3]; 3]
}

/// Third-order tensor `d_ij (x) e_i (x) e_j` built from a vector-valued matrix.
pub fn tensor_of(dm: &VecMat) -> Tensor3 {
    Tensor3::from_fn(|k, i, j| dm[i][j][k])
}

/// Per-node series coefficients of the strain and of the flattened second
/// derivatives, with the intermediate products kept for inspection.
#[derive(Debug, Clone)]
pub struct ExpansionCoeffs {
    /// Strain coefficients `E^n`, `n >= -2`.
    pub e: OrderSeries<Matrix3<f64>>,
    /// Second-derivative coefficients `d^n`, `n >= -2`.
    pub d: OrderSeries<VecMat>,
    /// In-plane/in-plane products `A^n`, `n >= 0`.
    pub a: OrderSeries<Matrix3<f64>>,
    /// Transverse/in-plane products `B^n`, `n >= 0`.
    pub b: OrderSeries<Matrix3<f64>>,
    /// Transverse/transverse products `C^n`, `n >= 0`.
    pub c: OrderSeries<Matrix3<f64>>,
    /// In-plane second-derivative blocks `xi^p`, `p >= 0`.
    pub xi: OrderSeries<VecMat>,
    /// Mixed blocks `gamma^p`, `p >= 0`.
    pub gamma: OrderSeries<VecMat>,
    /// Transverse blocks `zeta^p`, `p >= 0`.
    pub zeta: OrderSeries<VecMat>,
}

struct TermDerivs {
    d1: [Vector3<f64>; 3],
    d2: [[Vector3<f64>; 3]; 3],
}

fn term_derivs(term: &Field3D, node: (usize, usize, usize)) -> TermDerivs {
    let (i, j, k) = node;
    let d1 = [
        term.d1(i, j, k, 0),
        term.d1(i, j, k, 1),
        term.d1(i, j, k, 2),
    ];
    let mut d2 = [[Vector3::zeros(); 3]; 3];
    for a in 0..3 {
        for b in a..3 {
            let v = term.d2(i, j, k, a, b);
            d2[a][b] = v;
            d2[b][a] = v;
        }
    }
    TermDerivs { d1, d2 }
}

/// Series coefficients at one node, with inverse-map derivatives supplied at
/// the caller's offset (`t = h x3` for the thickness-dependent terms, `t = 0`
/// for the limit variants).
pub fn expansion_coeffs(
    exp: &DeformationExpansion,
    inv: &InverseDerivs,
    node: (usize, usize, usize),
) -> ExpansionCoeffs {
    let derivs: Vec<TermDerivs> = exp.terms().iter().map(|t| term_derivs(t, node)).collect();
    let n_terms = derivs.len();
    let prod_max = 2 * (n_terms - 1); // top order of the Cauchy products
    let d1m = &inv.d1;

    // S_ab(n) = sum_p phi^p_,a . phi^{n-p}_,b
    let cauchy = |a: usize, b: usize, n: usize| -> f64 {
        let lo = n.saturating_sub(n_terms - 1);
        let hi = n.min(n_terms - 1);
        (lo..=hi)
            .map(|p| derivs[p].d1[a].dot(&derivs[n - p].d1[b]))
            .sum()
    };

    let mut a_series = Vec::with_capacity(prod_max + 1);
    let mut b_series = Vec::with_capacity(prod_max + 1);
    let mut c_series = Vec::with_capacity(prod_max + 1);
    for n in 0..=prod_max {
        let mut a_n = Matrix3::zeros();
        let mut b_n = Matrix3::zeros();
        let mut c_n = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let mut a_ij = 0.0;
                let mut b_ij = 0.0;
                for alpha in 0..2 {
                    for beta in 0..2 {
                        a_ij += d1m[(alpha, i)] * d1m[(beta, j)] * cauchy(alpha, beta, n);
                    }
                    b_ij += (d1m[(2, i)] * d1m[(alpha, j)] + d1m[(alpha, i)] * d1m[(2, j)])
                        * cauchy(2, alpha, n);
                }
                a_n[(i, j)] = a_ij;
                b_n[(i, j)] = b_ij;
                c_n[(i, j)] = d1m[(2, i)] * d1m[(2, j)] * cauchy(2, 2, n);
            }
        }
        a_series.push(a_n);
        b_series.push(b_n);
        c_series.push(c_n);
    }

    let at = |s: &[Matrix3<f64>], n: i32| -> Matrix3<f64> {
        if n < 0 || n as usize >= s.len() {
            Matrix3::zeros()
        } else {
            s[n as usize]
        }
    };
    let mut e_series = Vec::with_capacity(prod_max + 3);
    for n in -2..=(prod_max as i32) {
        let mut e_n = match n {
            -2 => at(&c_series, 0),
            -1 => at(&b_series, 0) + at(&c_series, 1),
            0 => at(&a_series, 0) + at(&b_series, 1) + at(&c_series, 2) - Matrix3::identity(),
            _ => at(&a_series, n) + at(&b_series, n + 1) + at(&c_series, n + 2),
        };
        e_n *= 0.5;
        e_series.push(e_n);
    }

    // xi, gamma, zeta per term order.
    let mut xi = Vec::with_capacity(n_terms);
    let mut gamma = Vec::with_capacity(n_terms);
    let mut zeta = Vec::with_capacity(n_terms);
    for td in &derivs {
        let mut xi_p = vecmat_zero();
        let mut gamma_p = vecmat_zero();
        let mut zeta_p = vecmat_zero();
        for i in 0..3 {
            for j in 0..3 {
                let mut x = Vector3::zeros();
                let mut g = Vector3::zeros();
                for alpha in 0..2 {
                    for beta in 0..2 {
                        x += td.d2[alpha][beta] * (d1m[(alpha, i)] * d1m[(beta, j)]);
                    }
                    x += td.d1[alpha] * inv.d2.get(alpha, i, j);
                    g += td.d2[alpha][2]
                        * (d1m[(2, i)] * d1m[(alpha, j)] + d1m[(alpha, i)] * d1m[(2, j)]);
                }
                g += td.d1[2] * inv.d2.get(2, i, j);
                xi_p[i][j] = x;
                gamma_p[i][j] = g;
                zeta_p[i][j] = td.d2[2][2] * (d1m[(2, i)] * d1m[(2, j)]);
            }
        }
        xi.push(xi_p);
        gamma.push(gamma_p);
        zeta.push(zeta_p);
    }

    let vm_at = |s: &[VecMat], n: i32| -> VecMat {
        if n < 0 || n as usize >= s.len() {
            vecmat_zero()
        } else {
            s[n as usize]
        }
    };
    let vm_add = |a: VecMat, b: VecMat| -> VecMat {
        let mut out = vecmat_zero();
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = a[i][j] + b[i][j];
            }
        }
        out
    };
    let mut d_series = Vec::with_capacity(n_terms + 2);
    for n in -2..=(exp.order() as i32) {
        let d_n = match n {
            -2 => vm_at(&zeta, 0),
            -1 => vm_add(vm_at(&gamma, 0), vm_at(&zeta, 1)),
            _ => vm_add(
                vm_at(&xi, n),
                vm_add(vm_at(&gamma, n + 1), vm_at(&zeta, n + 2)),
            ),
        };
        d_series.push(d_n);
    }

    ExpansionCoeffs {
        e: OrderSeries::new(-2, e_series),
        d: OrderSeries::new(-2, d_series),
        a: OrderSeries::new(0, a_series),
        b: OrderSeries::new(0, b_series),
        c: OrderSeries::new(0, c_series),
        xi: OrderSeries::new(0, xi),
        gamma: OrderSeries::new(0, gamma),
        zeta: OrderSeries::new(0, zeta),
    }
}

/// Term energies `J^n_h`, `n = -4 ..= max_order`.
#[derive(Debug, Clone)]
pub struct TermEnergies {
    values: Vec<f64>,
    /// True when the requested top order references coefficients beyond the
    /// truncated expansion; those are taken as zero.
    pub clipped: bool,
}

impl TermEnergies {
    pub const MIN_ORDER: i32 = -4;

    pub fn order(&self, n: i32) -> f64 {
        if n < Self::MIN_ORDER {
            return 0.0;
        }
        self.values
            .get((n - Self::MIN_ORDER) as usize)
            .copied()
            .unwrap_or(0.0)
    }

    pub fn max_order(&self) -> i32 {
        Self::MIN_ORDER + self.values.len() as i32 - 1
    }

    pub fn orders(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(m, v)| (Self::MIN_ORDER + m as i32, *v))
    }

    /// Partial resummation `sum_{n=-4}^{max} J^n_h h^n`.
    pub fn sum_at(&self, h: f64) -> f64 {
        self.orders().map(|(n, v)| v * h.powi(n)).sum()
    }
}

/// Integrates the per-order energies of the expansion against the context's
/// inverse-map derivatives and Jacobian coefficients.
///
/// Every order is a pairing ladder: the coefficient pairs summing to `n` are
/// weighted by `c0`, those summing to `n - 1` by `c1`, and `n - 2` by `c2`.
pub fn term_energies(
    exp: &DeformationExpansion,
    ctx: &EvalContext,
    max_order: i32,
) -> TermEnergies {
    assert_eq!(
        exp.grid(),
        ctx.grid,
        "expansion and context grids must match"
    );
    assert!(max_order >= TermEnergies::MIN_ORDER);
    let count = (max_order - TermEnergies::MIN_ORDER + 1) as usize;
    let mut values = vec![0.0; count];

    for (i, j, k) in ctx.grid.nodes() {
        let inv = ctx.inv_at(i, j, k);
        let jc = ctx.jac_at(i, j, k);
        let w = ctx.grid.weight(i, j, k);
        let coeffs = expansion_coeffs(exp, inv, (i, j, k));

        let d_tensors: Vec<Tensor3> = (coeffs.d.min_order()..=coeffs.d.max_order())
            .map(|n| tensor_of(coeffs.d.get(n).unwrap()))
            .collect();
        let d_min = coeffs.d.min_order();
        let d_max = coeffs.d.max_order();
        let e_min = coeffs.e.min_order();
        let e_max = coeffs.e.max_order();

        let pair = |m: i32| -> f64 {
            let mut sum = 0.0;
            let lo = (m - d_max).max(d_min);
            let hi = (m + 2).min(d_max);
            for a in lo..=hi {
                let b = m - a;
                sum += ctx.qform.bform(
                    &d_tensors[(a - d_min) as usize],
                    &d_tensors[(b - d_min) as usize],
                );
            }
            let lo = (m - e_max).max(e_min);
            let hi = (m + 2).min(e_max);
            for a in lo..=hi {
                let b = m - a;
                sum += elasticity_contract(
                    coeffs.e.get(a).unwrap(),
                    coeffs.e.get(b).unwrap(),
                    &ctx.material,
                );
            }
            sum
        };

        for (slot, value) in values.iter_mut().enumerate() {
            let n = TermEnergies::MIN_ORDER + slot as i32;
            *value += w * (pair(n) * jc.c0 + pair(n - 1) * jc.c1 + pair(n - 2) * jc.c2);
        }
    }

    let clipped = max_order + 2 > exp.order() as i32;
    TermEnergies { values, clipped }
}

/// Clamped-trace data `phi(x) = A~ Psi(x1, x2, h x3)` on the lateral boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCondition {
    pub a_tilde: Matrix3<f64>,
}

impl BoundaryCondition {
    pub fn identity() -> Self {
        BoundaryCondition {
            a_tilde: Matrix3::identity(),
        }
    }

    pub fn new(a_tilde: Matrix3<f64>) -> Result<Self> {
        if a_tilde.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "boundary condition",
                "matrix entries must be finite",
            ));
        }
        Ok(BoundaryCondition { a_tilde })
    }
}

/// Per-node row of the constraint report.
#[derive(Debug, Clone, Copy)]
pub struct ConstraintRow {
    pub node: (usize, usize, usize),
    pub coords: (f64, f64, f64),
    pub phi0_d3: f64,
    pub phi1_d33: f64,
    pub is_boundary: bool,
    pub boundary_phi0: f64,
    pub boundary_phi1: f64,
    pub boundary_higher: f64,
}

/// Admissibility report for the minimization cascade: interior constraints
/// `phi^0_,3 = 0`, `phi^1_,33 = 0` and the order-matched boundary traces
/// `phi^0 = A~ psi`, `phi^1 = x3 A~ a3`, `phi^n = 0 (n >= 2)` on the lateral
/// boundary (the expansion in `h` of the clamped trace, exact because the
/// fattening map is affine in `x3`).
#[derive(Debug, Clone)]
pub struct ConstraintReport {
    pub rows: Vec<ConstraintRow>,
    pub max_phi0_d3: f64,
    pub max_phi1_d33: f64,
    pub max_boundary_phi0: f64,
    pub max_boundary_phi1: f64,
    pub max_boundary_higher: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ConstraintReport {
    pub fn summary(&self) -> String {
        format!(
            "cascade constraints: {} (max |phi0_,3| = {:.3e}, max |phi1_,33| = {:.3e}, boundary = {:.3e}/{:.3e}/{:.3e}, tol = {:.1e})",
            if self.pass { "PASS" } else { "FAIL" },
            self.max_phi0_d3,
            self.max_phi1_d33,
            self.max_boundary_phi0,
            self.max_boundary_phi1,
            self.max_boundary_higher,
            self.tolerance,
        )
    }
}

pub fn cascade_constraints(
    exp: &DeformationExpansion,
    bc: &BoundaryCondition,
    chart: &Chart,
    tolerance: f64,
) -> ConstraintReport {
    let grid = exp.grid();
    let mut rows = Vec::with_capacity(grid.node_count());
    let (mut m0, mut m1) = (0.0_f64, 0.0_f64);
    let (mut b0, mut b1, mut bh) = (0.0_f64, 0.0_f64, 0.0_f64);
    for (i, j, k) in grid.nodes() {
        let coords = grid.coord(i, j, k);
        let phi0_d3 = exp.terms()[0].d1(i, j, k, 2).norm();
        let phi1_d33 = exp.terms()[1].d2(i, j, k, 2, 2).norm();
        m0 = m0.max(phi0_d3);
        m1 = m1.max(phi1_d33);
        let is_boundary = grid.is_lateral_boundary(i, j);
        let (mut r0, mut r1, mut rh) = (0.0, 0.0, 0.0_f64);
        if is_boundary {
            let (x1, x2, x3) = coords;
            r0 = (exp.terms()[0].value(i, j, k) - bc.a_tilde * chart.psi(x1, x2)).norm();
            r1 = (exp.terms()[1].value(i, j, k) - x3 * (bc.a_tilde * chart.a3(x1, x2))).norm();
            for term in &exp.terms()[2..] {
                rh = rh.max(term.value(i, j, k).norm());
            }
            b0 = b0.max(r0);
            b1 = b1.max(r1);
            bh = bh.max(rh);
        }
        rows.push(ConstraintRow {
            node: (i, j, k),
            coords,
            phi0_d3,
            phi1_d33,
            is_boundary,
            boundary_phi0: r0,
            boundary_phi1: r1,
            boundary_higher: rh,
        });
    }
    let pass =
        m0 <= tolerance && m1 <= tolerance && b0 <= tolerance && b1 <= tolerance && bh <= tolerance;
    ConstraintReport {
        rows,
        max_phi0_d3: m0,
        max_phi1_d33: m1,
        max_boundary_phi0: b0,
        max_boundary_phi1: b1,
        max_boundary_higher: bh,
        tolerance,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elasticity::MaterialParams;
    use crate::geometry::Domain;
    use crate::tensor3::QuadraticForm3;

    fn unit_domain() -> Domain {
        Domain::new((0.0, 1.0), (0.0, 1.0)).unwrap()
    }

    fn grid() -> Grid3D {
        Grid3D::new(7, 7, 5, unit_domain()).unwrap()
    }

    fn planar() -> Chart {
        Chart::planar(unit_domain())
    }

    fn ctx(h: f64) -> EvalContext {
        EvalContext::new(
            &planar(),
            grid(),
            MaterialParams::default(),
            QuadraticForm3::frobenius(),
            h,
        )
        .unwrap()
    }

    fn q0_expansion() -> DeformationExpansion {
        // phi^0 independent of x3, phi^1 affine in x3: the cascade constraints
        // hold exactly on nodes.
        let g = grid();
        let phi0 = Field3D::from_fn(g, |x1, x2, _| Vector3::new(x1, x2, 0.1 * (x1 * x2)));
        let phi1 = Field3D::from_fn(g, |x1, x2, x3| {
            Vector3::new(0.2 * x2, 0.0, 1.0 + 0.3 * x1) * x3 + Vector3::new(0.0, 0.1 * x1, 0.0)
        });
        let phi2 = Field3D::from_fn(g, |x1, _, x3| Vector3::new(0.0, x3 * x3 * 0.4, 0.05 * x1));
        DeformationExpansion::new(vec![phi0, phi1, phi2]).unwrap()
    }

    #[test]
    fn coefficient_cancellations_under_constraints() {
        let exp = q0_expansion();
        let c = ctx(0.25);
        for (i, j, k) in grid().nodes() {
            let coeffs = expansion_coeffs(&exp, c.inv_at(i, j, k), (i, j, k));
            // phi^0_,3 = 0 kills E^-2 and d^-2; adding phi^1_,33 = 0 kills
            // E^-1 and d^-1.
            for n in [-2i32, -1] {
                assert!(
                    coeffs.e.get(n).unwrap().norm() < 1e-13,
                    "E^{n} at ({i},{j},{k})"
                );
                let dt = tensor_of(coeffs.d.get(n).unwrap());
                assert!(dt.iter().all(|v| v.abs() < 1e-13), "d^{n} at ({i},{j},{k})");
            }
        }
    }

    #[test]
    fn planar_identity_zeroes_order_zero() {
        let g = grid();
        let phi0 = Field3D::from_fn(g, |x1, x2, _| Vector3::new(x1, x2, 0.0));
        let phi1 = Field3D::from_fn(g, |_, _, x3| Vector3::new(0.0, 0.0, x3));
        let phi2 = Field3D::zeros(g);
        let exp = DeformationExpansion::new(vec![phi0, phi1, phi2]).unwrap();
        let c = ctx(0.25);
        for &(i, j, k) in &[(0usize, 0usize, 0usize), (3, 3, 2), (6, 6, 4)] {
            let coeffs = expansion_coeffs(&exp, c.inv_at(i, j, k), (i, j, k));
            assert!(coeffs.e.get(0).unwrap().norm() < 1e-13);
            let dt = tensor_of(coeffs.d.get(0).unwrap());
            assert!(dt.iter().all(|v| v.abs() < 1e-13));
        }
    }

    #[test]
    fn symmetry_of_coefficients() {
        let exp = q0_expansion();
        let c = ctx(0.25);
        for &(i, j, k) in &[(1usize, 2usize, 3usize), (5, 1, 0), (0, 6, 4)] {
            let coeffs = expansion_coeffs(&exp, c.inv_at(i, j, k), (i, j, k));
            for n in coeffs.e.min_order()..=coeffs.e.max_order() {
                let e = coeffs.e.get(n).unwrap();
                assert!((e - e.transpose()).norm() < 1e-13);
            }
            for n in coeffs.d.min_order()..=coeffs.d.max_order() {
                let d = coeffs.d.get(n).unwrap();
                for p in 0..3 {
                    for q in 0..3 {
                        assert!((d[p][q] - d[q][p]).norm() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn negative_orders_vanish_on_constrained_expansions() {
        let exp = q0_expansion();
        let c = ctx(0.25);
        let te = term_energies(&exp, &c, 0);
        let scale = 1.0 + te.order(0).abs();
        for n in -4..0 {
            assert!(
                te.order(n).abs() <= 1e-12 * scale,
                "J^{n} = {}",
                te.order(n)
            );
        }
    }

    #[test]
    fn jm4_positive_when_constraint_violated() {
        let g = grid();
        let phi0 = Field3D::from_fn(g, |x1, x2, x3| Vector3::new(x1, x2, 0.3 * x3));
        let phi1 = Field3D::zeros(g);
        let phi2 = Field3D::zeros(g);
        let exp = DeformationExpansion::new(vec![phi0, phi1, phi2]).unwrap();
        let c = ctx(0.25);
        let te = term_energies(&exp, &c, 0);
        assert!(te.order(-4) > 0.0);
    }

    #[test]
    fn cascade_constraint_report() {
        let chart = planar();
        let bc = BoundaryCondition::identity();
        let g = grid();

        // Planar identity with A~ = I: all residuals vanish.
        let exp = identity_recovery_expansion(&chart, g);
        let report = cascade_constraints(&exp, &bc, &chart, 1e-10);
        assert!(report.pass, "{}", report.summary());

        // A transverse drift in phi^0 must be caught at its stencil value.
        let phi0 = Field3D::from_fn(g, |x1, x2, x3| Vector3::new(x1, x2, 0.1 * x3));
        let exp = DeformationExpansion::new(vec![
            phi0,
            Field3D::from_fn(g, |_, _, x3| Vector3::new(0.0, 0.0, x3)),
            Field3D::zeros(g),
        ])
        .unwrap();
        let report = cascade_constraints(&exp, &bc, &chart, 1e-10);
        assert!(!report.pass);
        assert!((report.max_phi0_d3 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn cylinder_identity_recovery_constraints() {
        let chart = Chart::cylinder(2.0, unit_domain()).unwrap();
        let exp = identity_recovery_expansion(&chart, grid());
        let report = cascade_constraints(&exp, &BoundaryCondition::identity(), &chart, 1e-10);
        assert!(report.pass, "{}", report.summary());
    }

    #[test]
    fn clipping_is_reported() {
        let exp = q0_expansion();
        let c = ctx(0.25);
        assert!(!term_energies(&exp, &c, 0).clipped);
        assert!(term_energies(&exp, &c, 3).clipped);
    }
}
