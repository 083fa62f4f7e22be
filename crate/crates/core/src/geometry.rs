//! Midsurface charts, covariant/contravariant frames, the fattening map and
//! its gradient, the Jacobian polynomial coefficients, and first/second
//! derivatives of the inverse map along the film.
//!
//! Three analytic charts are built in (plane, cylinder portion, sphere band).
//! User charts plug in through [`UserSurface`]; they must supply the chart map
//! together with first, second and third derivatives (third derivatives feed
//! the normal's curvature derivatives; the built-in charts are smooth so the
//! C^3 requirement only binds extensions). Generic numerical inversion of the
//! fattening map is deliberately absent: first/second derivatives of the
//! inverse come from the inverse-function identities, and the closed-form
//! inverses of the cylinder and sphere are kept only as test oracles.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::tensor3::Tensor3;

/// Rectangle `omega = I1 x I2` in the parameter plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub x1: (f64, f64),
    pub x2: (f64, f64),
}

impl Domain {
    pub fn new(x1: (f64, f64), x2: (f64, f64)) -> Result<Self> {
        if !(x1.0 < x1.1) || !(x2.0 < x2.1) {
            return Err(Error::invalid(
                "domain",
                format!("degenerate rectangle {x1:?} x {x2:?}"),
            ));
        }
        if ![x1.0, x1.1, x2.0, x2.1].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("domain", "bounds must be finite"));
        }
        Ok(Domain { x1, x2 })
    }

    pub fn len1(&self) -> f64 {
        self.x1.1 - self.x1.0
    }

    pub fn len2(&self) -> f64 {
        self.x2.1 - self.x2.0
    }

    pub fn area(&self) -> f64 {
        self.len1() * self.len2()
    }
}

/// Extension point for user-supplied midsurfaces.
///
/// Implementors provide the chart map and its partial derivatives up to
/// third order (`alpha` indices are 0-based in-plane directions). The normal
/// and its derivatives are then synthesized by exact quotient-rule algebra,
/// so the accuracy of the geometry is the accuracy of these derivatives.
pub trait UserSurface: Send + Sync {
    fn psi(&self, x1: f64, x2: f64) -> Vector3<f64>;
    fn psi_d1(&self, x1: f64, x2: f64, alpha: usize) -> Vector3<f64>;
    fn psi_d2(&self, x1: f64, x2: f64, a: usize, b: usize) -> Vector3<f64>;
    fn psi_d3(&self, x1: f64, x2: f64, a: usize, b: usize, c: usize) -> Vector3<f64>;
}

#[derive(Clone)]
pub enum ChartKind {
    Planar,
    Cylinder { radius: f64 },
    SphereBand,
    Custom(Arc<dyn UserSurface>),
}

impl fmt::Debug for ChartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChartKind::Planar => write!(f, "Planar"),
            ChartKind::Cylinder { radius } => write!(f, "Cylinder {{ radius: {radius} }}"),
            ChartKind::SphereBand => write!(f, "SphereBand"),
            ChartKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// A chart of the midsurface together with its parameter rectangle and the
/// lower bound `delta` for `|a1 ^ a2|`.
#[derive(Debug, Clone)]
pub struct Chart {
    pub kind: ChartKind,
    pub domain: Domain,
    pub delta: f64,
}

/// Covariant frame at a point: tangents `a1, a2`, unit normal `a3`, the
/// matrix `A = (a1|a2|a3)`, its inverse (contravariant rows) and determinant.
#[derive(Debug, Clone, Copy)]
pub struct ChartFrame {
    pub a1: Vector3<f64>,
    pub a2: Vector3<f64>,
    pub a3: Vector3<f64>,
    pub a_mat: Matrix3<f64>,
    pub a_inv: Matrix3<f64>,
    pub det_a: f64,
}

/// Coefficients of `det grad(Psi)(x1, x2, h x3) = c0 + h c1 + h^2 c2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianCoeffs {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl JacobianCoeffs {
    pub fn eval(&self, h: f64) -> f64 {
        self.c0 + h * self.c1 + h * h * self.c2
    }
}

/// First and second derivatives of the inverse map, evaluated at
/// `Psi(x1, x2, t)`: `D1[(k, i)] = (Psi^-1)_k,i` and `D2(k, i, j) = (Psi^-1)_k,ij`.
#[derive(Debug, Clone, Copy)]
pub struct InverseDerivs {
    pub d1: Matrix3<f64>,
    pub d2: Tensor3,
}

impl Chart {
    pub fn planar(domain: Domain) -> Self {
        Chart {
            kind: ChartKind::Planar,
            domain,
            delta: 1.0,
        }
    }

    pub fn cylinder(radius: f64, domain: Domain) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::invalid(
                "chart",
                format!("cylinder radius must be > 0, got {radius}"),
            ));
        }
        Ok(Chart {
            kind: ChartKind::Cylinder { radius },
            domain,
            delta: radius,
        })
    }

    /// Latitude interval `domain.x1` must stay inside `(0, pi)`.
    pub fn sphere_band(domain: Domain) -> Result<Self> {
        if !(domain.x1.0 > 0.0 && domain.x1.1 < std::f64::consts::PI) {
            return Err(Error::invalid(
                "chart",
                format!(
                    "sphere band latitudes must lie in (0, pi), got {:?}",
                    domain.x1
                ),
            ));
        }
        let delta = domain.x1.0.sin().min(domain.x1.1.sin());
        Ok(Chart {
            kind: ChartKind::SphereBand,
            domain,
            delta,
        })
    }

    pub fn custom(surface: Arc<dyn UserSurface>, domain: Domain, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::invalid("chart", "custom chart needs delta > 0"));
        }
        Ok(Chart {
            kind: ChartKind::Custom(surface),
            domain,
            delta,
        })
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            ChartKind::Planar => "planar".to_string(),
            ChartKind::Cylinder { radius } => format!("cylinder(r={radius})"),
            ChartKind::SphereBand => "sphere".to_string(),
            ChartKind::Custom(_) => "custom".to_string(),
        }
    }

    /// Parses `{"kind": "planar"|"cylinder"|"sphere", "radius": r,
    /// "domain": [[x1min,x1max],[x2min,x2max]], "delta": d}`.
    pub fn from_spec(value: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Spec {
            kind: String,
            radius: Option<f64>,
            domain: Option<[[f64; 2]; 2]>,
            delta: Option<f64>,
        }
        let spec: Spec = serde_json::from_value(value.clone())
            .map_err(|e| Error::invalid("chart", e.to_string()))?;
        let domain = |default: Domain| -> Result<Domain> {
            match spec.domain {
                Some([[a, b], [c, d]]) => Domain::new((a, b), (c, d)),
                None => Ok(default),
            }
        };
        let half_pi = std::f64::consts::FRAC_PI_2;
        let chart = match spec.kind.as_str() {
            "planar" => Chart::planar(domain(Domain::new((0.0, 1.0), (0.0, 1.0))?)?),
            "cylinder" => Chart::cylinder(
                spec.radius.unwrap_or(1.0),
                domain(Domain::new((0.0, 1.0), (0.0, half_pi))?)?,
            )?,
            "sphere" => Chart::sphere_band(domain(Domain::new(
                (
                    std::f64::consts::FRAC_PI_4,
                    3.0 * std::f64::consts::FRAC_PI_4,
                ),
                (0.0, half_pi),
            )?)?)?,
            other => return Err(Error::invalid("chart", format!("unknown kind '{other}'"))),
        };
        Ok(match spec.delta {
            Some(d) if d > 0.0 => chart.with_delta(d),
            Some(d) => {
                return Err(Error::invalid(
                    "chart",
                    format!("delta must be > 0, got {d}"),
                ))
            }
            None => chart,
        })
    }

    pub fn psi(&self, x1: f64, x2: f64) -> Vector3<f64> {
        match &self.kind {
            ChartKind::Planar => Vector3::new(x1, x2, 0.0),
            ChartKind::Cylinder { radius } => {
                Vector3::new(x1, radius * x2.cos(), radius * x2.sin())
            }
            ChartKind::SphereBand => {
                Vector3::new(x1.sin() * x2.cos(), x1.sin() * x2.sin(), x1.cos())
            }
            ChartKind::Custom(s) => s.psi(x1, x2),
        }
    }

    pub fn psi_d1(&self, x1: f64, x2: f64, alpha: usize) -> Vector3<f64> {
        debug_assert!(alpha < 2);
        match &self.kind {
            ChartKind::Planar => {
                if alpha == 0 {
                    Vector3::x()
                } else {
                    Vector3::y()
                }
            }
            ChartKind::Cylinder { radius } => {
                if alpha == 0 {
                    Vector3::x()
                } else {
                    Vector3::new(0.0, -radius * x2.sin(), radius * x2.cos())
                }
            }
            ChartKind::SphereBand => {
                if alpha == 0 {
                    Vector3::new(x1.cos() * x2.cos(), x1.cos() * x2.sin(), -x1.sin())
                } else {
                    Vector3::new(-x1.sin() * x2.sin(), x1.sin() * x2.cos(), 0.0)
                }
            }
            ChartKind::Custom(s) => s.psi_d1(x1, x2, alpha),
        }
    }

    pub fn psi_d2(&self, x1: f64, x2: f64, a: usize, b: usize) -> Vector3<f64> {
        debug_assert!(a < 2 && b < 2);
        match &self.kind {
            ChartKind::Planar => Vector3::zeros(),
            ChartKind::Cylinder { radius } => {
                if a == 1 && b == 1 {
                    Vector3::new(0.0, -radius * x2.cos(), -radius * x2.sin())
                } else {
                    Vector3::zeros()
                }
            }
            ChartKind::SphereBand => match (a, b) {
                (0, 0) => -self.psi(x1, x2),
                (1, 1) => Vector3::new(-x1.sin() * x2.cos(), -x1.sin() * x2.sin(), 0.0),
                _ => Vector3::new(-x1.cos() * x2.sin(), x1.cos() * x2.cos(), 0.0),
            },
            ChartKind::Custom(s) => s.psi_d2(x1, x2, a, b),
        }
    }

    pub fn psi_d3(&self, x1: f64, x2: f64, a: usize, b: usize, c: usize) -> Vector3<f64> {
        match &self.kind {
            ChartKind::Planar => Vector3::zeros(),
            ChartKind::Cylinder { radius } => {
                if a == 1 && b == 1 && c == 1 {
                    Vector3::new(0.0, radius * x2.sin(), -radius * x2.cos())
                } else {
                    Vector3::zeros()
                }
            }
            ChartKind::SphereBand => match a + b + c {
                0 => -self.psi_d1(x1, x2, 0),
                1 | 3 => -self.psi_d1(x1, x2, 1),
                _ => Vector3::new(-x1.cos() * x2.cos(), -x1.cos() * x2.sin(), 0.0),
            },
            ChartKind::Custom(s) => s.psi_d3(x1, x2, a, b, c),
        }
    }

    /// Unit normal `a3 = a1 ^ a2 / |a1 ^ a2|`.
    pub fn a3(&self, x1: f64, x2: f64) -> Vector3<f64> {
        match &self.kind {
            ChartKind::Planar => Vector3::z(),
            ChartKind::Cylinder { .. } => Vector3::new(0.0, -x2.cos(), -x2.sin()),
            ChartKind::SphereBand => self.psi(x1, x2),
            ChartKind::Custom(_) => {
                let n = self.psi_d1(x1, x2, 0).cross(&self.psi_d1(x1, x2, 1));
                n / n.norm()
            }
        }
    }

    pub fn a3_d1(&self, x1: f64, x2: f64, alpha: usize) -> Vector3<f64> {
        match &self.kind {
            ChartKind::Planar => Vector3::zeros(),
            ChartKind::Cylinder { .. } => {
                if alpha == 1 {
                    Vector3::new(0.0, x2.sin(), -x2.cos())
                } else {
                    Vector3::zeros()
                }
            }
            ChartKind::SphereBand => self.psi_d1(x1, x2, alpha),
            ChartKind::Custom(_) => self.normal_derivs(x1, x2).1[alpha],
        }
    }

    pub fn a3_d2(&self, x1: f64, x2: f64, a: usize, b: usize) -> Vector3<f64> {
        match &self.kind {
            ChartKind::Planar => Vector3::zeros(),
            ChartKind::Cylinder { .. } => {
                if a == 1 && b == 1 {
                    Vector3::new(0.0, x2.cos(), x2.sin())
                } else {
                    Vector3::zeros()
                }
            }
            ChartKind::SphereBand => self.psi_d2(x1, x2, a, b),
            ChartKind::Custom(_) => self.normal_derivs(x1, x2).2[a][b],
        }
    }

    /// `|a1 ^ a2| = det A` in closed form for the built-in charts.
    pub fn det_a(&self, x1: f64, x2: f64) -> f64 {
        match &self.kind {
            ChartKind::Planar => 1.0,
            ChartKind::Cylinder { radius } => *radius,
            ChartKind::SphereBand => x1.sin(),
            ChartKind::Custom(_) => self.psi_d1(x1, x2, 0).cross(&self.psi_d1(x1, x2, 1)).norm(),
        }
    }

    /// Normal and its first/second derivatives by quotient-rule algebra on
    /// `n = a1 ^ a2`; exact given exact chart derivatives. Only the custom
    /// path uses this; built-ins carry closed forms.
    fn normal_derivs(
        &self,
        x1: f64,
        x2: f64,
    ) -> (Vector3<f64>, [Vector3<f64>; 2], [[Vector3<f64>; 2]; 2]) {
        let d1 = |a| self.psi_d1(x1, x2, a);
        let d2 = |a, b| self.psi_d2(x1, x2, a, b);
        let d3 = |a, b, c| self.psi_d3(x1, x2, a, b, c);

        let n = d1(0).cross(&d1(1));
        let n_d = |a: usize| d2(0, a).cross(&d1(1)) + d1(0).cross(&d2(1, a));
        let n_dd = |a: usize, b: usize| {
            d3(0, a, b).cross(&d1(1))
                + d2(0, a).cross(&d2(1, b))
                + d2(0, b).cross(&d2(1, a))
                + d1(0).cross(&d3(1, a, b))
        };

        let nn = n.norm();
        let a3 = n / nn;
        let mut first = [Vector3::zeros(); 2];
        for (alpha, slot) in first.iter_mut().enumerate() {
            let na = n_d(alpha);
            *slot = na / nn - n * (n.dot(&na)) / nn.powi(3);
        }
        let mut second = [[Vector3::zeros(); 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let na = n_d(a);
                let nb = n_d(b);
                let nab = n_dd(a, b);
                second[a][b] = nab / nn
                    - (na * n.dot(&nb) + nb * n.dot(&na) + n * (na.dot(&nb) + n.dot(&nab)))
                        / nn.powi(3)
                    + 3.0 * n * (n.dot(&na)) * (n.dot(&nb)) / nn.powi(5);
            }
        }
        (a3, first, second)
    }

    /// Covariant/contravariant frame at `(x1, x2)`.
    pub fn frame(&self, x1: f64, x2: f64) -> Result<ChartFrame> {
        let det_a = self.det_a(x1, x2);
        if det_a < self.delta {
            return Err(Error::ChartSingular {
                x1,
                x2,
                det: det_a,
                delta: self.delta,
            });
        }
        let a1 = self.psi_d1(x1, x2, 0);
        let a2 = self.psi_d1(x1, x2, 1);
        let a3 = self.a3(x1, x2);
        let a_mat = Matrix3::from_columns(&[a1, a2, a3]);
        let a_inv = a_mat.try_inverse().ok_or(Error::ChartSingular {
            x1,
            x2,
            det: det_a,
            delta: self.delta,
        })?;
        Ok(ChartFrame {
            a1,
            a2,
            a3,
            a_mat,
            a_inv,
            det_a,
        })
    }

    /// Fattening map `Psi(x1, x2, x3) = psi + x3 a3` at transverse offset `t`.
    pub fn psi_fat(&self, x1: f64, x2: f64, t: f64) -> Vector3<f64> {
        self.psi(x1, x2) + t * self.a3(x1, x2)
    }

    /// `grad Psi(x1, x2, t) = A + t (a3_,1 | a3_,2 | 0)`.
    pub fn grad_psi(&self, x1: f64, x2: f64, t: f64) -> Matrix3<f64> {
        let cols = [
            self.psi_d1(x1, x2, 0) + t * self.a3_d1(x1, x2, 0),
            self.psi_d1(x1, x2, 1) + t * self.a3_d1(x1, x2, 1),
            self.a3(x1, x2),
        ];
        Matrix3::from_columns(&cols)
    }

    /// Value and gradient of the fattening map at `(x1, x2, h x3)`; errors if
    /// orientation is lost at the requested point.
    pub fn psi_and_grad(&self, x: (f64, f64, f64), h: f64) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        let t = h * x.2;
        let value = self.psi_fat(x.0, x.1, t);
        let grad = self.grad_psi(x.0, x.1, t);
        let det = grad.determinant();
        if det <= 0.0 {
            return Err(Error::ThicknessTooLarge { h, min_det: det });
        }
        Ok((value, grad))
    }

    /// Coefficients of the Jacobian polynomial
    /// `det grad(Psi)(x1, x2, h x3) = c0 + h c1 + h^2 c2`.
    pub fn jacobian_coeffs(&self, x1: f64, x2: f64, x3: f64) -> JacobianCoeffs {
        let a1 = self.psi_d1(x1, x2, 0);
        let a2 = self.psi_d1(x1, x2, 1);
        let a3 = self.a3(x1, x2);
        let b1 = self.a3_d1(x1, x2, 0);
        let b2 = self.a3_d1(x1, x2, 1);
        let det = |u: Vector3<f64>, v: Vector3<f64>, w: Vector3<f64>| {
            Matrix3::from_columns(&[u, v, w]).determinant()
        };
        JacobianCoeffs {
            c0: self.det_a(x1, x2),
            c1: x3 * (det(a1, b2, a3) + det(b1, a2, a3)),
            c2: x3 * x3 * det(b1, b2, a3),
        }
    }

    /// First and second derivatives of the inverse map at `Psi(x1, x2, t)`,
    /// from the inverse-function identities:
    /// `D1 = (grad Psi)^-1` and
    /// `D2(k,p,q) = -sum D1(k,l) Psi_l,mn D1(m,p) D1(n,q)`.
    pub fn inv_derivs(&self, x1: f64, x2: f64, t: f64) -> Result<InverseDerivs> {
        let grad = self.grad_psi(x1, x2, t);
        let d1 = grad.try_inverse().ok_or(Error::ChartSingular {
            x1,
            x2,
            det: grad.determinant(),
            delta: self.delta,
        })?;

        // Second derivatives of Psi: Psi_,ab = psi_,ab + t a3_,ab,
        // Psi_,a3 = a3_,a, Psi_,33 = 0.
        let mut hess = [Matrix3::zeros(); 3]; // hess[l][(m, n)] = Psi_l,mn
        for a in 0..2 {
            for b in 0..2 {
                let v = self.psi_d2(x1, x2, a, b) + t * self.a3_d2(x1, x2, a, b);
                for l in 0..3 {
                    hess[l][(a, b)] = v[l];
                }
            }
            let v = self.a3_d1(x1, x2, a);
            for l in 0..3 {
                hess[l][(a, 2)] = v[l];
                hess[l][(2, a)] = v[l];
            }
        }

        let d2 = Tensor3::from_fn(|k, p, q| {
            let mut sum = 0.0;
            for l in 0..3 {
                // (D1 row p)^T Psi_l,.. (D1 row q), contracted against D1(k, l).
                let mut inner = 0.0;
                for m in 0..3 {
                    for n in 0..3 {
                        inner += hess[l][(m, n)] * d1[(m, p)] * d1[(n, q)];
                    }
                }
                sum += d1[(k, l)] * inner;
            }
            -sum
        });
        Ok(InverseDerivs { d1, d2 })
    }

    /// Closed-form inverse of the fattening map, where one exists; kept as a
    /// finite-difference oracle for [`Chart::inv_derivs`].
    pub fn closed_form_inverse(&self, z: &Vector3<f64>) -> Option<Vector3<f64>> {
        match &self.kind {
            ChartKind::Planar => Some(*z),
            ChartKind::Cylinder { radius } => {
                let rho = z.y.hypot(z.z);
                Some(Vector3::new(z.x, z.z.atan2(z.y), radius - rho))
            }
            ChartKind::SphereBand => {
                let horizontal = z.x.hypot(z.y);
                Some(Vector3::new(
                    horizontal.atan2(z.z),
                    z.y.atan2(z.x),
                    z.norm() - 1.0,
                ))
            }
            ChartKind::Custom(_) => None,
        }
    }
}
