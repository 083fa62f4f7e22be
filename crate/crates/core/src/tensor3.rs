//! Third-order tensors on R^3, the contracted tensor product, and diagonal
//! quadratic forms on the tensor space.
//!
//! Tensors are stored dense: 27 components indexed `(i, j, k)` with
//! `i, j, k` in `0..3`. They are tiny and sit on the hot path of every
//! energy evaluation, so no sparsity is attempted.

use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;

use crate::error::{Error, Result};

/// Dense third-order tensor with components `t[i][j][k]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tensor3 {
    components: [f64; 27],
}

#[inline]
fn idx(i: usize, j: usize, k: usize) -> usize {
    debug_assert!(i < 3 && j < 3 && k < 3);
    9 * i + 3 * j + k
}

impl Tensor3 {
    pub const ZERO: Tensor3 = Tensor3 {
        components: [0.0; 27],
    };

    pub fn from_fn(mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut components = [0.0; 27];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    components[idx(i, j, k)] = f(i, j, k);
                }
            }
        }
        Tensor3 { components }
    }

    /// Row-major components in `(i, j, k)` order.
    pub fn from_row_major(components: [f64; 27]) -> Self {
        Tensor3 { components }
    }

    /// Rank-one tensor `u (x) v (x) w`.
    pub fn outer(u: &Vector3<f64>, v: &Vector3<f64>, w: &Vector3<f64>) -> Self {
        Self::from_fn(|i, j, k| u[i] * v[j] * w[k])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.components[idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        self.components[idx(i, j, k)] = value;
    }

    /// Transpose with respect to the second and third index; an involution.
    pub fn transpose23(&self) -> Self {
        Self::from_fn(|i, j, k| self.get(i, k, j))
    }

    /// Contracted tensor product `P (x-bar) R` with a matrix right operand:
    /// sums the last index of `P` against the first index of `R`.
    pub fn contract_right(&self, r: &Matrix3<f64>) -> Self {
        Self::from_fn(|i, j, m| (0..3).map(|k| self.get(i, j, k) * r[(k, m)]).sum())
    }

    /// Contracted tensor product `M (x-bar) P` with a matrix left operand:
    /// sums the last index of `M` against the first index of `P`.
    pub fn contract_left(m: &Matrix3<f64>, p: &Tensor3) -> Self {
        Self::from_fn(|l, i, j| (0..3).map(|k| m[(l, k)] * p.get(k, i, j)).sum())
    }

    pub fn add(&self, other: &Tensor3) -> Self {
        let mut components = self.components;
        for (c, o) in components.iter_mut().zip(other.components.iter()) {
            *c += o;
        }
        Tensor3 { components }
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut components = self.components;
        for c in components.iter_mut() {
            *c *= factor;
        }
        Tensor3 { components }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.components.iter().copied()
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }
}

impl std::ops::Add for Tensor3 {
    type Output = Tensor3;
    fn add(self, rhs: Tensor3) -> Tensor3 {
        Tensor3::add(&self, &rhs)
    }
}

/// Diagonal positive quadratic form on third-order tensors,
/// `Q(A) = sum A_ijk^2 Q_ijk` with `Q_ijk >= 0` and at least one
/// coefficient strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm3 {
    coeffs: [f64; 27],
}

impl QuadraticForm3 {
    /// Validating constructor; coefficients in row-major `(i, j, k)` order.
    pub fn new(coeffs: [f64; 27]) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::invalid(
                "quadratic form",
                "all coefficients must be finite and >= 0",
            ));
        }
        if !coeffs.iter().any(|c| *c > 0.0) {
            return Err(Error::invalid(
                "quadratic form",
                "at least one coefficient must be strictly positive",
            ));
        }
        Ok(QuadraticForm3 { coeffs })
    }

    /// The square of the Frobenius norm: all coefficients 1.
    pub fn frobenius() -> Self {
        QuadraticForm3 { coeffs: [1.0; 27] }
    }

    #[inline]
    pub fn coeff(&self, i: usize, j: usize, k: usize) -> f64 {
        self.coeffs[idx(i, j, k)]
    }

    /// `Q(A) = sum A_ijk^2 Q_ijk`.
    pub fn qform(&self, a: &Tensor3) -> f64 {
        self.coeffs
            .iter()
            .zip(a.components.iter())
            .map(|(q, c)| q * c * c)
            .sum()
    }

    /// Associated symmetric bilinear form `B(A, A') = sum A_ijk A'_ijk Q_ijk`.
    pub fn bform(&self, a: &Tensor3, b: &Tensor3) -> f64 {
        self.coeffs
            .iter()
            .zip(a.components.iter().zip(b.components.iter()))
            .map(|(q, (x, y))| q * x * y)
            .sum()
    }

    /// Parses the configuration form: the token `"frobenius"` or a list of
    /// 27 nonnegative numbers in row-major `(i, j, k)` order.
    pub fn from_spec(value: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Spec {
            Token(String),
            List(Vec<f64>),
        }
        let spec: Spec = serde_json::from_value(value.clone())
            .map_err(|e| Error::invalid("quadratic form", e.to_string()))?;
        match spec {
            Spec::Token(t) if t == "frobenius" => Ok(Self::frobenius()),
            Spec::Token(t) => Err(Error::invalid(
                "quadratic form",
                format!("unknown token '{t}'"),
            )),
            Spec::List(list) => {
                let arr: [f64; 27] = list.try_into().map_err(|v: Vec<f64>| {
                    Error::invalid(
                        "quadratic form",
                        format!("expected 27 coefficients, got {}", v.len()),
                    )
                })?;
                Self::new(arr)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn basis(i: usize, j: usize, k: usize) -> Tensor3 {
        let mut t = Tensor3::ZERO;
        t.set(i, j, k, 1.0);
        t
    }

    fn random_tensor(rng: &mut ChaCha8Rng) -> Tensor3 {
        Tensor3::from_fn(|_, _, _| rng.gen_range(-1.0..1.0))
    }

    fn random_matrix(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn contract_basis_case() {
        // e1 (x) e1 (x) e1 contracted with e1 (x) e2 gives e1 (x) e1 (x) e2.
        let p = basis(0, 0, 0);
        let mut r = Matrix3::zeros();
        r[(0, 1)] = 1.0;
        assert_eq!(p.contract_right(&r), basis(0, 0, 1));
    }

    #[test]
    fn contract_identity_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_tensor(&mut rng);
        let q = p.contract_right(&Matrix3::identity());
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    assert!((q.get(i, j, k) - p.get(i, j, k)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn contract_matches_naive_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let p = random_tensor(&mut rng);
            let r = random_matrix(&mut rng);
            let got = p.contract_right(&r);
            for i in 0..3 {
                for j in 0..3 {
                    for m in 0..3 {
                        let mut want = 0.0;
                        for k in 0..3 {
                            want += p.get(i, j, k) * r[(k, m)];
                        }
                        assert!((got.get(i, j, m) - want).abs() <= 1e-14);
                    }
                }
            }
            let m = random_matrix(&mut rng);
            let got = Tensor3::contract_left(&m, &p);
            for l in 0..3 {
                for i in 0..3 {
                    for j in 0..3 {
                        let mut want = 0.0;
                        for k in 0..3 {
                            want += m[(l, k)] * p.get(k, i, j);
                        }
                        assert!((got.get(l, i, j) - want).abs() <= 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn transpose23_involution_and_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_tensor(&mut rng);
        assert_eq!(p.transpose23().transpose23(), p);
        assert_eq!(basis(0, 1, 2).transpose23(), basis(0, 2, 1));
        // A tensor symmetric in its last two slots is a fixed point.
        let s = Tensor3::from_fn(|i, j, k| (i + 1) as f64 * (j * k + j + k) as f64);
        assert_eq!(s.transpose23(), s);
    }

    #[test]
    fn qform_hand_cases() {
        let q = QuadraticForm3::frobenius();
        let mut a = Tensor3::ZERO;
        a.set(0, 1, 2, 2.0);
        assert_eq!(q.qform(&a), 4.0);

        let mut coeffs = [0.0; 27];
        coeffs[0] = 3.0; // Q_111
        let q = QuadraticForm3::new(coeffs).unwrap();
        let mut a = Tensor3::ZERO;
        a.set(0, 0, 0, 2.0);
        assert_eq!(q.qform(&a), 12.0);
    }

    #[test]
    fn bform_polarization_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = QuadraticForm3::new(std::array::from_fn(|_| rng.gen_range(0.0..2.0))).unwrap();
        for _ in 0..50 {
            let a = random_tensor(&mut rng);
            let b = random_tensor(&mut rng);
            let direct = q.bform(&a, &b);
            let sum = a.add(&b);
            let diff = a.add(&b.scale(-1.0));
            let polarized = 0.25 * (q.qform(&sum) - q.qform(&diff));
            assert!((direct - polarized).abs() <= 1e-12 * (1.0 + direct.abs()));
            assert!((q.bform(&a, &a) - q.qform(&a)).abs() <= 1e-14 * (1.0 + q.qform(&a)));
        }
    }

    #[test]
    fn bform_symmetric_bilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = QuadraticForm3::new(std::array::from_fn(|_| rng.gen_range(0.0..2.0))).unwrap();
        for _ in 0..50 {
            let a = random_tensor(&mut rng);
            let b = random_tensor(&mut rng);
            let c = random_tensor(&mut rng);
            let (s, t) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            assert!((q.bform(&a, &b) - q.bform(&b, &a)).abs() <= 1e-12);
            let lhs = q.bform(&a.scale(s).add(&b.scale(t)), &c);
            let rhs = s * q.bform(&a, &c) + t * q.bform(&b, &c);
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn qform_nonnegative_and_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // Zero out some coefficients; the form must vanish exactly on tensors
        // supported where Q vanishes and be positive otherwise.
        let mut coeffs = [0.0; 27];
        for c in coeffs.iter_mut().take(13) {
            *c = rng.gen_range(0.5..2.0);
        }
        let q = QuadraticForm3::new(coeffs).unwrap();
        for _ in 0..50 {
            let a = random_tensor(&mut rng);
            assert!(q.qform(&a) >= 0.0);
        }
        let mut in_kernel = Tensor3::ZERO;
        in_kernel.set(2, 2, 2, 5.0); // index 26, weight zero
        assert_eq!(q.qform(&in_kernel), 0.0);
        let mut outside = Tensor3::ZERO;
        outside.set(0, 0, 0, 1e-8);
        assert!(q.qform(&outside) > 0.0);
    }

    #[test]
    fn constructor_rejects_bad_coefficients() {
        assert!(QuadraticForm3::new([0.0; 27]).is_err());
        let mut coeffs = [1.0; 27];
        coeffs[5] = -0.5;
        assert!(QuadraticForm3::new(coeffs).is_err());
    }

    #[test]
    fn parses_from_config_value() {
        let q = QuadraticForm3::from_spec(&serde_json::json!("frobenius")).unwrap();
        assert_eq!(q, QuadraticForm3::frobenius());
        let list: Vec<f64> = (0..27).map(|i| i as f64).collect();
        let q = QuadraticForm3::from_spec(&serde_json::json!(list)).unwrap();
        assert_eq!(q.coeff(0, 0, 1), 1.0);
        assert_eq!(q.coeff(2, 2, 2), 26.0);
        assert!(QuadraticForm3::from_spec(&serde_json::json!("euclidean")).is_err());
        assert!(QuadraticForm3::from_spec(&serde_json::json!([1.0, 2.0])).is_err());
    }
}
