//! Saint Venant-Kirchhoff stored energy, Green-Saint Venant strain, and the
//! elasticity-tensor pairing used by the expansion terms.
//!
//! The elasticity tensor `C^ijkl = lambda d^ij d^kl + mu (d^ik d^jl + d^il d^jk)`
//! is never materialized; the closed form `lambda tr tr + 2 mu (:)` is exact
//! and faster. All energy-cascade formulas pair strains through
//! [`elasticity_contract`], which is twice the density [`svk_density`]; the
//! factor-two identity is pinned by a test rather than silently normalized.

use nalgebra::Matrix3;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Lame constants, plus an optional growth/coercivity triple used only by
/// diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialParams {
    pub lambda: f64,
    pub mu: f64,
    pub growth: Option<GrowthParams>,
}

/// Growth-condition constants `c1 (|A|^2 - 1) <= W(A) <= c2 (|A|^q + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthParams {
    pub c1: f64,
    pub c2: f64,
    pub q: f64,
}

impl MaterialParams {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(
                "material",
                format!("lambda must be > 0, got {lambda}"),
            ));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::invalid(
                "material",
                format!("mu must be > 0, got {mu}"),
            ));
        }
        Ok(MaterialParams {
            lambda,
            mu,
            growth: None,
        })
    }

    pub fn with_growth(mut self, c1: f64, c2: f64, q: f64) -> Result<Self> {
        if !(c1 > 0.0 && c2 > 0.0) {
            return Err(Error::invalid(
                "material",
                "growth constants c1, c2 must be > 0",
            ));
        }
        if !(2.0..6.0).contains(&q) {
            return Err(Error::invalid(
                "material",
                format!("growth exponent q must satisfy 2 <= q < 6, got {q}"),
            ));
        }
        self.growth = Some(GrowthParams { c1, c2, q });
        Ok(self)
    }

    /// Parses from configuration keys `lambda`, `mu` with defaults 1.0, 1.0.
    pub fn from_spec(value: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Spec {
            #[serde(default = "one")]
            lambda: f64,
            #[serde(default = "one")]
            mu: f64,
        }
        fn one() -> f64 {
            1.0
        }
        let spec: Spec = serde_json::from_value(value.clone())
            .map_err(|e| Error::invalid("material", e.to_string()))?;
        Self::new(spec.lambda, spec.mu)
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            lambda: 1.0,
            mu: 1.0,
            growth: None,
        }
    }
}

/// Green-Saint Venant strain `E = (F^T F - I) / 2`; symmetric by construction.
pub fn strain(f: &Matrix3<f64>) -> Matrix3<f64> {
    let mut e = f.transpose() * f;
    e[(0, 0)] -= 1.0;
    e[(1, 1)] -= 1.0;
    e[(2, 2)] -= 1.0;
    e * 0.5
}

/// Saint Venant-Kirchhoff density
/// `W(F) = lambda/8 tr(F^T F - I)^2 + mu/4 tr((F^T F - I)^2)`.
pub fn svk_density(f: &Matrix3<f64>, mat: &MaterialParams) -> f64 {
    let e2 = strain(f) * 2.0; // F^T F - I
    let tr = e2.trace();
    let frob2 = (e2.component_mul(&e2)).sum(); // tr(e2^2) for symmetric e2
    mat.lambda / 8.0 * tr * tr + mat.mu / 4.0 * frob2
}

/// Elasticity-tensor pairing of two symmetric strains:
/// `C^ijkl E_ij E'_kl = lambda tr(E) tr(E') + 2 mu E : E'`.
pub fn elasticity_contract(e: &Matrix3<f64>, e_prime: &Matrix3<f64>, mat: &MaterialParams) -> f64 {
    let dot: f64 = e.component_mul(e_prime).sum();
    mat.lambda * e.trace() * e_prime.trace() + 2.0 * mat.mu * dot
}
