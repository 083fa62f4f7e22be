//! Structured grids on the parameter rectangle and the unit cylinder, nodal
//! vector fields, second-order difference stencils, and trapezoidal weights.
//!
//! The same 1D stencil kernels serve both the 2D and 3D grids, so the
//! in-plane derivatives of a field lifted from `omega` into the cylinder
//! agree bit-for-bit with the 2D derivatives of the original. Fields may
//! carry an optional analytic jet (exact first/second derivatives per node);
//! accessors fall back to stencils when no jet is present.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::Domain;

pub const MIN_NODES: usize = 5;

/// Second-order first derivative of a line of samples, central in the
/// interior and one-sided at the ends.
#[inline]
pub(crate) fn diff1(f: impl Fn(usize) -> Vector3<f64>, i: usize, n: usize, h: f64) -> Vector3<f64> {
    if i == 0 {
        (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * h)
    } else if i == n - 1 {
        (3.0 * f(n - 1) - 4.0 * f(n - 2) + f(n - 3)) / (2.0 * h)
    } else {
        (f(i + 1) - f(i - 1)) / (2.0 * h)
    }
}

/// Second-order second derivative; 3-point central, 4-point one-sided.
#[inline]
pub(crate) fn diff2(f: impl Fn(usize) -> Vector3<f64>, i: usize, n: usize, h: f64) -> Vector3<f64> {
    let h2 = h * h;
    if i == 0 {
        (2.0 * f(0) - 5.0 * f(1) + 4.0 * f(2) - f(3)) / h2
    } else if i == n - 1 {
        (2.0 * f(n - 1) - 5.0 * f(n - 2) + 4.0 * f(n - 3) - f(n - 4)) / h2
    } else {
        (f(i + 1) - 2.0 * f(i) + f(i - 1)) / h2
    }
}

/// Trapezoid weight of node `i` on an `n`-node uniform line of spacing `h`.
#[inline]
pub(crate) fn trapezoid_weight(i: usize, n: usize, h: f64) -> f64 {
    if i == 0 || i == n - 1 {
        0.5 * h
    } else {
        h
    }
}

/// Uniform grid on the rectangle `omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub n1: usize,
    pub n2: usize,
    pub domain: Domain,
}

impl Grid2D {
    pub fn new(n1: usize, n2: usize, domain: Domain) -> Result<Self> {
        if n1 < MIN_NODES || n2 < MIN_NODES {
            return Err(Error::invalid(
                "grid",
                format!("need at least {MIN_NODES} nodes per axis, got {n1} x {n2}"),
            ));
        }
        Ok(Grid2D { n1, n2, domain })
    }

    #[inline]
    pub fn spacing(&self, axis: usize) -> f64 {
        match axis {
            0 => self.domain.len1() / (self.n1 - 1) as f64,
            _ => self.domain.len2() / (self.n2 - 1) as f64,
        }
    }

    #[inline]
    pub fn coord(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.domain.x1.0 + self.spacing(0) * i as f64,
            self.domain.x2.0 + self.spacing(1) * j as f64,
        )
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n2 + j
    }

    pub fn node_count(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n1).flat_map(move |i| (0..self.n2).map(move |j| (i, j)))
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.n1 - 1 || j == self.n2 - 1
    }

    /// Product trapezoid weight of a node.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        trapezoid_weight(i, self.n1, self.spacing(0))
            * trapezoid_weight(j, self.n2, self.spacing(1))
    }
}

/// Uniform grid on the unit cylinder `omega x [-1/2, 1/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3D {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub domain: Domain,
}

impl Grid3D {
    pub fn new(n1: usize, n2: usize, n3: usize, domain: Domain) -> Result<Self> {
        if n1 < MIN_NODES || n2 < MIN_NODES || n3 < MIN_NODES {
            return Err(Error::invalid(
                "grid",
                format!("need at least {MIN_NODES} nodes per axis, got {n1} x {n2} x {n3}"),
            ));
        }
        Ok(Grid3D { n1, n2, n3, domain })
    }

    pub fn plane(&self) -> Grid2D {
        Grid2D {
            n1: self.n1,
            n2: self.n2,
            domain: self.domain,
        }
    }

    #[inline]
    pub fn len(&self, axis: usize) -> usize {
        match axis {
            0 => self.n1,
            1 => self.n2,
            _ => self.n3,
        }
    }

    #[inline]
    pub fn spacing(&self, axis: usize) -> f64 {
        match axis {
            0 => self.domain.len1() / (self.n1 - 1) as f64,
            1 => self.domain.len2() / (self.n2 - 1) as f64,
            _ => 1.0 / (self.n3 - 1) as f64,
        }
    }

    #[inline]
    pub fn coord(&self, i: usize, j: usize, k: usize) -> (f64, f64, f64) {
        (
            self.domain.x1.0 + self.spacing(0) * i as f64,
            self.domain.x2.0 + self.spacing(1) * j as f64,
            -0.5 + self.spacing(2) * k as f64,
        )
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n2 + j) * self.n3 + k
    }

    pub fn node_count(&self) -> usize {
        self.n1 * self.n2 * self.n3
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.n1)
            .flat_map(move |i| (0..self.n2).map(move |j| (i, j)))
            .flat_map(move |(i, j)| (0..self.n3).map(move |k| (i, j, k)))
    }

    /// Boundary of the lateral surface `d(omega) x [-1/2, 1/2]`.
    #[inline]
    pub fn is_lateral_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.n1 - 1 || j == self.n2 - 1
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize, k: usize) -> f64 {
        trapezoid_weight(i, self.n1, self.spacing(0))
            * trapezoid_weight(j, self.n2, self.spacing(1))
            * trapezoid_weight(k, self.n3, self.spacing(2))
    }
}

/// Exact per-node derivatives attached to an analytically known field.
/// `d2` stores the symmetric pairs (11, 12, 13, 22, 23, 33).
#[derive(Debug, Clone)]
pub struct Jet3D {
    pub d1: Vec<[Vector3<f64>; 3]>,
    pub d2: Vec<[Vector3<f64>; 6]>,
}

#[inline]
pub(crate) fn sym_index(a: usize, b: usize) -> usize {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    match (lo, hi) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

/// Nodal vector field on a [`Grid3D`], with optional analytic jet.
#[derive(Debug, Clone)]
pub struct Field3D {
    pub grid: Grid3D,
    pub values: Vec<Vector3<f64>>,
    pub jet: Option<Jet3D>,
}

impl Field3D {
    pub fn zeros(grid: Grid3D) -> Self {
        Field3D {
            grid,
            values: vec![Vector3::zeros(); grid.node_count()],
            jet: None,
        }
    }

    /// Samples a closure of the cylinder coordinates at every node.
    pub fn from_fn(grid: Grid3D, mut f: impl FnMut(f64, f64, f64) -> Vector3<f64>) -> Self {
        let mut values = Vec::with_capacity(grid.node_count());
        for (i, j, k) in grid.nodes() {
            let (x1, x2, x3) = grid.coord(i, j, k);
            values.push(f(x1, x2, x3));
        }
        Field3D {
            grid,
            values,
            jet: None,
        }
    }

    /// Samples values together with exact derivatives:
    /// `f(x) -> (value, [d/dx1, d/dx2, d/dx3], [d2 in sym order])`.
    pub fn from_fn_with_jet(
        grid: Grid3D,
        mut f: impl FnMut(f64, f64, f64) -> (Vector3<f64>, [Vector3<f64>; 3], [Vector3<f64>; 6]),
    ) -> Self {
        let n = grid.node_count();
        let (mut values, mut d1, mut d2) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        for (i, j, k) in grid.nodes() {
            let (x1, x2, x3) = grid.coord(i, j, k);
            let (v, g, h) = f(x1, x2, x3);
            values.push(v);
            d1.push(g);
            d2.push(h);
        }
        Field3D {
            grid,
            values,
            jet: Some(Jet3D { d1, d2 }),
        }
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.values[self.grid.index(i, j, k)]
    }

    /// First derivative along `axis` (0, 1 in-plane; 2 transverse), from the
    /// jet when present, otherwise by stencil.
    pub fn d1(&self, i: usize, j: usize, k: usize, axis: usize) -> Vector3<f64> {
        if let Some(jet) = &self.jet {
            return jet.d1[self.grid.index(i, j, k)][axis];
        }
        self.stencil_d1(i, j, k, axis)
    }

    fn stencil_d1(&self, i: usize, j: usize, k: usize, axis: usize) -> Vector3<f64> {
        let g = &self.grid;
        let h = g.spacing(axis);
        match axis {
            0 => diff1(|m| self.values[g.index(m, j, k)], i, g.n1, h),
            1 => diff1(|m| self.values[g.index(i, m, k)], j, g.n2, h),
            _ => diff1(|m| self.values[g.index(i, j, m)], k, g.n3, h),
        }
    }

    /// Second derivative; pure second differences on-axis, composed first
    /// differences for mixed pairs (axis order fixed low-to-high).
    pub fn d2(&self, i: usize, j: usize, k: usize, a: usize, b: usize) -> Vector3<f64> {
        if let Some(jet) = &self.jet {
            return jet.d2[self.grid.index(i, j, k)][sym_index(a, b)];
        }
        let g = &self.grid;
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if lo == hi {
            let h = g.spacing(lo);
            return match lo {
                0 => diff2(|m| self.values[g.index(m, j, k)], i, g.n1, h),
                1 => diff2(|m| self.values[g.index(i, m, k)], j, g.n2, h),
                _ => diff2(|m| self.values[g.index(i, j, m)], k, g.n3, h),
            };
        }
        // Mixed: outer difference along `lo` of the inner difference along `hi`.
        let h = g.spacing(lo);
        match (lo, hi) {
            (0, 1) => diff1(|m| self.stencil_d1(m, j, k, 1), i, g.n1, h),
            (0, 2) => diff1(|m| self.stencil_d1(m, j, k, 2), i, g.n1, h),
            _ => diff1(|m| self.stencil_d1(i, m, k, 2), j, g.n2, h),
        }
    }

    /// Nodal linear combination `sum coeffs[t] * terms[t]`; the jet survives
    /// only when every term carries one.
    pub fn linear_combination(terms: &[&Field3D], coeffs: &[f64]) -> Field3D {
        assert_eq!(terms.len(), coeffs.len());
        assert!(!terms.is_empty());
        let grid = terms[0].grid;
        let n = grid.node_count();
        let mut values = vec![Vector3::zeros(); n];
        for (t, &c) in terms.iter().zip(coeffs) {
            assert_eq!(t.grid, grid, "terms must share one grid");
            for (v, tv) in values.iter_mut().zip(&t.values) {
                *v += c * tv;
            }
        }
        let jet = if terms.iter().all(|t| t.jet.is_some()) {
            let mut d1 = vec![[Vector3::zeros(); 3]; n];
            let mut d2 = vec![[Vector3::zeros(); 6]; n];
            for (t, &c) in terms.iter().zip(coeffs) {
                let jet = t.jet.as_ref().unwrap();
                for m in 0..n {
                    for s in 0..3 {
                        d1[m][s] += c * jet.d1[m][s];
                    }
                    for s in 0..6 {
                        d2[m][s] += c * jet.d2[m][s];
                    }
                }
            }
            Some(Jet3D { d1, d2 })
        } else {
            None
        };
        Field3D { grid, values, jet }
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.x.is_finite() && v.y.is_finite() && v.z.is_finite())
    }
}

/// Exact per-node derivatives for a 2D field; `d2` pairs (11, 12, 22).
#[derive(Debug, Clone)]
pub struct Jet2D {
    pub d1: Vec<[Vector3<f64>; 2]>,
    pub d2: Vec<[Vector3<f64>; 3]>,
}

#[inline]
pub(crate) fn sym_index2(a: usize, b: usize) -> usize {
    a + b // (0,0) -> 0, (0,1)/(1,0) -> 1, (1,1) -> 2
}

/// Nodal vector field on a [`Grid2D`], with optional analytic jet.
#[derive(Debug, Clone)]
pub struct Field2D {
    pub grid: Grid2D,
    pub values: Vec<Vector3<f64>>,
    pub jet: Option<Jet2D>,
}

impl Field2D {
    pub fn zeros(grid: Grid2D) -> Self {
        Field2D {
            grid,
            values: vec![Vector3::zeros(); grid.node_count()],
            jet: None,
        }
    }

    pub fn constant(grid: Grid2D, v: Vector3<f64>) -> Self {
        Field2D {
            grid,
            values: vec![v; grid.node_count()],
            jet: None,
        }
    }

    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> Vector3<f64>) -> Self {
        let mut values = Vec::with_capacity(grid.node_count());
        for (i, j) in grid.nodes() {
            let (x1, x2) = grid.coord(i, j);
            values.push(f(x1, x2));
        }
        Field2D {
            grid,
            values,
            jet: None,
        }
    }

    pub fn from_fn_with_jet(
        grid: Grid2D,
        mut f: impl FnMut(f64, f64) -> (Vector3<f64>, [Vector3<f64>; 2], [Vector3<f64>; 3]),
    ) -> Self {
        let n = grid.node_count();
        let (mut values, mut d1, mut d2) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        for (i, j) in grid.nodes() {
            let (x1, x2) = grid.coord(i, j);
            let (v, g, h) = f(x1, x2);
            values.push(v);
            d1.push(g);
            d2.push(h);
        }
        Field2D {
            grid,
            values,
            jet: Some(Jet2D { d1, d2 }),
        }
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> Vector3<f64> {
        self.values[self.grid.index(i, j)]
    }

    pub fn d1(&self, i: usize, j: usize, axis: usize) -> Vector3<f64> {
        if let Some(jet) = &self.jet {
            return jet.d1[self.grid.index(i, j)][axis];
        }
        self.stencil_d1(i, j, axis)
    }

    fn stencil_d1(&self, i: usize, j: usize, axis: usize) -> Vector3<f64> {
        let g = &self.grid;
        let h = g.spacing(axis);
        match axis {
            0 => diff1(|m| self.values[g.index(m, j)], i, g.n1, h),
            _ => diff1(|m| self.values[g.index(i, m)], j, g.n2, h),
        }
    }

    pub fn d2(&self, i: usize, j: usize, a: usize, b: usize) -> Vector3<f64> {
        if let Some(jet) = &self.jet {
            return jet.d2[self.grid.index(i, j)][sym_index2(a, b)];
        }
        let g = &self.grid;
        if a == b {
            let h = g.spacing(a);
            return match a {
                0 => diff2(|m| self.values[g.index(m, j)], i, g.n1, h),
                _ => diff2(|m| self.values[g.index(i, m)], j, g.n2, h),
            };
        }
        diff1(|m| self.stencil_d1(m, j, 1), i, g.n1, g.spacing(0))
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.x.is_finite() && v.y.is_finite() && v.z.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_domain() -> Domain {
        Domain::new((0.0, 1.0), (0.0, 1.0)).unwrap()
    }

    #[test]
    fn grid_construction_guards() {
        assert!(Grid2D::new(4, 8, unit_domain()).is_err());
        assert!(Grid3D::new(8, 8, 3, unit_domain()).is_err());
        let g = Grid3D::new(9, 7, 5, unit_domain()).unwrap();
        assert_eq!(g.plane(), Grid2D::new(9, 7, unit_domain()).unwrap());
    }

    #[test]
    fn trapezoid_weights_sum_to_measure() {
        let g = Grid3D::new(9, 7, 5, unit_domain()).unwrap();
        let total: f64 = g.nodes().map(|(i, j, k)| g.weight(i, j, k)).sum();
        assert!((total - 1.0).abs() < 1e-14); // |omega| * 1
        let g2 = g.plane();
        let total2: f64 = g2.nodes().map(|(i, j)| g2.weight(i, j)).sum();
        assert!((total2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn stencils_exact_on_quadratics() {
        let g = Grid3D::new(7, 7, 7, unit_domain()).unwrap();
        // f = (x1^2, x2 x3, x1 x2) is quadratic: all stencils must be exact,
        // including the one-sided rows.
        let f = Field3D::from_fn(g, |x1, x2, x3| Vector3::new(x1 * x1, x2 * x3, x1 * x2));
        for (i, j, k) in g.nodes() {
            let (x1, x2, x3) = g.coord(i, j, k);
            assert!((f.d1(i, j, k, 0) - Vector3::new(2.0 * x1, 0.0, x2)).norm() < 1e-12);
            assert!((f.d1(i, j, k, 1) - Vector3::new(0.0, x3, x1)).norm() < 1e-12);
            assert!((f.d1(i, j, k, 2) - Vector3::new(0.0, x2, 0.0)).norm() < 1e-12);
            assert!((f.d2(i, j, k, 0, 0) - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-11);
            assert!((f.d2(i, j, k, 0, 1) - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-11);
            assert!((f.d2(i, j, k, 1, 2) - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-11);
            assert!(f.d2(i, j, k, 2, 2).norm() < 1e-11);
        }
    }

    #[test]
    fn stencils_second_order_on_smooth_fields() {
        // Error on sin/cos fields must drop by ~4x per refinement.
        let field = |g: Grid3D| {
            Field3D::from_fn(g, |x1, x2, x3| {
                Vector3::new((2.0 * x1).sin() * x2.cos(), x3 * x1.cos(), (x2 + x3).sin())
            })
        };
        let mut errors = Vec::new();
        for n in [9, 17, 33] {
            let g = Grid3D::new(n, n, n, unit_domain()).unwrap();
            let f = field(g);
            let mut worst: f64 = 0.0;
            for (i, j, k) in g.nodes() {
                let (x1, x2, x3) = g.coord(i, j, k);
                let exact = Vector3::new(2.0 * (2.0 * x1).cos() * x2.cos(), -x3 * x1.sin(), 0.0);
                worst = worst.max((f.d1(i, j, k, 0) - exact).norm());
                let exact12 = Vector3::new(-2.0 * (2.0 * x1).cos() * x2.sin(), 0.0, 0.0);
                worst = worst.max((f.d2(i, j, k, 0, 1) - exact12).norm());
            }
            errors.push(worst);
        }
        assert!(errors[0] / errors[1] > 3.0);
        assert!(errors[1] / errors[2] > 3.0);
    }

    #[test]
    fn plane_and_cylinder_stencils_agree_on_lifted_fields() {
        let g3 = Grid3D::new(9, 8, 5, unit_domain()).unwrap();
        let g2 = g3.plane();
        let base = Field2D::from_fn(g2, |x1, x2| {
            Vector3::new((3.0 * x1).sin(), x2 * x2 * x1, x2.cos())
        });
        let lifted = Field3D::from_fn(g3, |x1, x2, _| {
            Vector3::new((3.0 * x1).sin(), x2 * x2 * x1, x2.cos())
        });
        for (i, j, k) in g3.nodes() {
            // In-plane stencils run the same arithmetic on the same values.
            for axis in 0..2 {
                assert_eq!(lifted.d1(i, j, k, axis), base.d1(i, j, axis));
                assert_eq!(lifted.d2(i, j, k, axis, axis), base.d2(i, j, axis, axis));
            }
            assert_eq!(lifted.d2(i, j, k, 0, 1), base.d2(i, j, 0, 1));
            // Transverse stencils on an x3-independent field cancel to
            // rounding (the one-sided rows mix inexact multiples).
            assert!(lifted.d1(i, j, k, 2).norm() < 1e-13);
            assert!(lifted.d2(i, j, k, 2, 2).norm() < 1e-12);
        }
    }

    #[test]
    fn jets_override_stencils() {
        let g = Grid3D::new(5, 5, 5, unit_domain()).unwrap();
        let f = Field3D::from_fn_with_jet(g, |x1, _, _| {
            let v = Vector3::new(x1.exp(), 0.0, 0.0);
            let mut d1 = [Vector3::zeros(); 3];
            d1[0] = v;
            let mut d2 = [Vector3::zeros(); 6];
            d2[sym_index(0, 0)] = v;
            (v, d1, d2)
        });
        for (i, j, k) in g.nodes() {
            let (x1, _, _) = g.coord(i, j, k);
            assert_eq!(f.d1(i, j, k, 0).x, x1.exp());
            assert_eq!(f.d2(i, j, k, 0, 0).x, x1.exp());
        }
    }
}
