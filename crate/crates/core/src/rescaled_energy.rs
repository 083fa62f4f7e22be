//! Direct evaluation of the rescaled energy `J(h) = K(h) + I(h)` on the unit
//! cylinder — the ground truth the asymptotic expansion is checked against.
//!
//! The membrane part pairs the strain through the elasticity tensor
//! (`C E : E`, twice the Saint Venant-Kirchhoff density); the second-order
//! part applies the quadratic form to the flattened second-derivative tensor
//! assembled by contracted products against the inverse-map derivatives.

use nalgebra::{Matrix3, Vector3};

use crate::elasticity::{elasticity_contract, strain, MaterialParams};
use crate::error::{Error, Result};
use crate::geometry::{Chart, InverseDerivs, JacobianCoeffs};
use crate::grid::{sym_index, Field3D, Grid3D};
use crate::tensor3::{QuadraticForm3, Tensor3};

/// Thickness-bound, per-node geometry cache for evaluating energies at one `h`.
///
/// Inverse-map derivatives are taken at offset `t = h x3` per node; they
/// dominate evaluation cost and do not depend on the deformation, so they are
/// computed once here. Construction fails fast if the fattening map loses
/// orientation anywhere on the grid.
pub struct EvalContext {
    pub h: f64,
    pub chart: Chart,
    pub material: MaterialParams,
    pub qform: QuadraticForm3,
    pub grid: Grid3D,
    pub(crate) jac: Vec<JacobianCoeffs>,
    pub(crate) inv: Vec<InverseDerivs>,
    pub(crate) det_h: Vec<f64>,
}

impl EvalContext {
    pub fn new(
        chart: &Chart,
        grid: Grid3D,
        material: MaterialParams,
        qform: QuadraticForm3,
        h: f64,
    ) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::invalid(
                "thickness",
                format!("h must be > 0, got {h}"),
            ));
        }
        Self::build(chart, grid, material, qform, h)
    }

    /// Zero-thickness variant: inverse-map derivatives at the midsurface
    /// (`t = 0`), used for the limit terms. Not valid for [`energy_j`].
    pub fn at_limit(
        chart: &Chart,
        grid: Grid3D,
        material: MaterialParams,
        qform: QuadraticForm3,
    ) -> Result<Self> {
        Self::build(chart, grid, material, qform, 0.0)
    }

    fn build(
        chart: &Chart,
        grid: Grid3D,
        material: MaterialParams,
        qform: QuadraticForm3,
        h: f64,
    ) -> Result<Self> {
        let n = grid.node_count();
        let mut jac = Vec::with_capacity(n);
        let mut min_det = f64::INFINITY;
        for (i, j, k) in grid.nodes() {
            let (x1, x2, x3) = grid.coord(i, j, k);
            let jc = chart.jacobian_coeffs(x1, x2, x3);
            min_det = min_det.min(jc.eval(h));
            jac.push(jc);
        }
        if min_det <= 0.0 {
            return Err(Error::ThicknessTooLarge { h, min_det });
        }
        let mut inv = Vec::with_capacity(n);
        let mut det_h = Vec::with_capacity(n);
        for (i, j, k) in grid.nodes() {
            let (x1, x2, x3) = grid.coord(i, j, k);
            det_h.push(chart.grad_psi(x1, x2, h * x3).determinant());
            inv.push(chart.inv_derivs(x1, x2, h * x3)?);
        }
        Ok(EvalContext {
            h,
            chart: chart.clone(),
            material,
            qform,
            grid,
            jac,
            inv,
            det_h,
        })
    }

    #[inline]
    pub(crate) fn inv_at(&self, i: usize, j: usize, k: usize) -> &InverseDerivs {
        &self.inv[self.grid.index(i, j, k)]
    }

    #[inline]
    pub(crate) fn jac_at(&self, i: usize, j: usize, k: usize) -> &JacobianCoeffs {
        &self.jac[self.grid.index(i, j, k)]
    }
}

/// Rescaled first and second gradients at a node:
/// `grad_h phi = grad_p phi + (1/h) phi_,3 (x) e3` and the matching
/// second-derivative tensor with `1/h`, `1/h^2` factors on transverse slots.
pub fn rescaled_grads(
    phi: &Field3D,
    h: f64,
    node: (usize, usize, usize),
) -> (Matrix3<f64>, Tensor3) {
    let (i, j, k) = node;
    let d1 = [
        phi.d1(i, j, k, 0),
        phi.d1(i, j, k, 1),
        phi.d1(i, j, k, 2) / h,
    ];
    let grad = Matrix3::from_columns(&d1);

    let mut d2 = [Vector3::zeros(); 6];
    for a in 0..3 {
        for b in a..3 {
            let scale = 1.0 / h.powi((a == 2) as i32 + (b == 2) as i32);
            d2[sym_index(a, b)] = phi.d2(i, j, k, a, b) * scale;
        }
    }
    let hess = Tensor3::from_fn(|c, a, b| d2[sym_index(a, b)][c]);
    (grad, hess)
}

/// Energy parts of one evaluation: `total = i_part + k_part`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub i_part: f64,
    pub k_part: f64,
    pub total: f64,
}

/// Trapezoidal evaluation of the rescaled energy
/// `J(h) = int W(grad_h phi A_h) d_h + int Q((grad2_h phi ox A_h)^T23 ox A_h + grad_h phi ox B_h) d_h`.
pub fn energy_j(phi: &Field3D, ctx: &EvalContext) -> EnergyBreakdown {
    assert!(ctx.h > 0.0, "energy_j needs a positive-thickness context");
    assert_eq!(phi.grid, ctx.grid, "field and context grids must match");
    let mut i_part = 0.0;
    let mut k_part = 0.0;
    for (i, j, k) in ctx.grid.nodes() {
        let idx = ctx.grid.index(i, j, k);
        let inv = &ctx.inv[idx];
        let d_h = ctx.det_h[idx];
        let w = ctx.grid.weight(i, j, k) * d_h;

        let (grad, hess) = rescaled_grads(phi, ctx.h, (i, j, k));
        let f = grad * inv.d1;
        let e = strain(&f);
        i_part += w * elasticity_contract(&e, &e, &ctx.material);

        let second = hess
            .contract_right(&inv.d1)
            .transpose23()
            .contract_right(&inv.d1)
            .add(&Tensor3::contract_left(&grad, &inv.d2));
        k_part += w * ctx.qform.qform(&second);
    }
    EnergyBreakdown {
        i_part,
        k_part,
        total: i_part + k_part,
    }
}

/// The identity-recovery field `phi = Psi o z_h` sampled with its exact jet;
/// evaluating [`energy_j`] on it probes the algebraic cancellations free of
/// stencil error.
pub fn identity_recovery_field(chart: &Chart, grid: Grid3D, h: f64) -> Field3D {
    Field3D::from_fn_with_jet(grid, |x1, x2, x3| {
        let t = h * x3;
        let value = chart.psi_fat(x1, x2, t);
        let d1 = [
            chart.psi_d1(x1, x2, 0) + t * chart.a3_d1(x1, x2, 0),
            chart.psi_d1(x1, x2, 1) + t * chart.a3_d1(x1, x2, 1),
            h * chart.a3(x1, x2),
        ];
        let mut d2 = [Vector3::zeros(); 6];
        for a in 0..2 {
            for b in a..2 {
                d2[sym_index(a, b)] = chart.psi_d2(x1, x2, a, b) + t * chart.a3_d2(x1, x2, a, b);
            }
            d2[sym_index(a, 2)] = h * chart.a3_d1(x1, x2, a);
        }
        (value, d1, d2)
    })
}
