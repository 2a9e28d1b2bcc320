//! Finite truncations of the sequence spaces used throughout the crate.
//!
//! Vectors live in a caller-chosen truncation dimension `D` with 1-based
//! logical indexing: entry `n` of a sequence is `get(n)`. Four norms are
//! provided: the plain `ℓ¹` and `ℓ²` norms, the index-weighted `ℓ¹` norm
//! `Σ n·|v_n|` (written `F` below), and its dual `sup_n |v_n|/n` (written
//! `G`). Operations on vectors of different dimensions treat the missing
//! entries of the shorter vector as zeros.

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// Dense truncation of a real sequence, logically indexed from 1.
///
/// Every entry is finite; constructors reject NaN and infinities so that
/// downstream arithmetic never has to re-check.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SeqVector {
    coeffs: Vec<f64>,
}

impl SeqVector {
    /// Builds a vector from raw coefficients, rejecting non-finite entries.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if let Some(pos) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!(
                "coefficient at index {} is {}",
                pos + 1,
                coeffs[pos]
            )));
        }
        Ok(Self { coeffs })
    }

    /// Internal constructor for values produced by library arithmetic.
    pub(crate) fn from_raw(coeffs: Vec<f64>) -> Self {
        debug_assert!(coeffs.iter().all(|c| c.is_finite()));
        Self { coeffs }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            coeffs: vec![0.0; dim],
        }
    }

    /// Basis vector `e_index` (1-based) in dimension `dim`.
    ///
    /// Panics if `index` is zero or exceeds `dim`.
    pub fn basis(index: usize, dim: usize) -> Self {
        assert!(
            index >= 1 && index <= dim,
            "basis index {index} out of 1..={dim}"
        );
        let mut coeffs = vec![0.0; dim];
        coeffs[index - 1] = 1.0;
        Self { coeffs }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    /// Entry at 1-based logical index; zero beyond the stored dimension.
    pub fn get(&self, index: usize) -> f64 {
        assert!(index >= 1, "logical indices start at 1");
        self.coeffs.get(index - 1).copied().unwrap_or(0.0)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Elementwise sum; the shorter vector is zero-padded.
    pub fn add(&self, other: &Self) -> Self {
        let dim = self.dim().max(other.dim());
        let mut coeffs = vec![0.0; dim];
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c = self.coeffs.get(i).copied().unwrap_or(0.0)
                + other.coeffs.get(i).copied().unwrap_or(0.0);
        }
        Self::from_raw(coeffs)
    }

    /// Elementwise difference; the shorter vector is zero-padded.
    pub fn sub(&self, other: &Self) -> Self {
        let dim = self.dim().max(other.dim());
        let mut coeffs = vec![0.0; dim];
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c = self.coeffs.get(i).copied().unwrap_or(0.0)
                - other.coeffs.get(i).copied().unwrap_or(0.0);
        }
        Self::from_raw(coeffs)
    }

    pub fn scale(&self, a: f64) -> Self {
        assert!(a.is_finite(), "scaling factor must be finite");
        Self::from_raw(self.coeffs.iter().map(|c| a * c).collect())
    }

    /// `Σ |v_n|`.
    pub fn norm_l1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    /// `(Σ v_n²)^{1/2}`.
    pub fn norm_l2(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Index-weighted `ℓ¹` norm `Σ n·|v_n|`.
    pub fn norm_f(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| (i + 1) as f64 * c.abs())
            .sum()
    }

    /// Dual of the weighted norm: `max_n |v_n|/n` over stored indices.
    pub fn dual_norm_g(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c.abs() / (i + 1) as f64)
            .fold(0.0, f64::max)
    }

    /// Euclidean pairing `Σ u_n v_n`, zero-padding the shorter vector.
    pub fn inner(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(other.coeffs.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Serializes to a single CSV record, index 1 first.
    pub fn to_csv_record(&self) -> Vec<String> {
        self.coeffs.iter().map(|c| format!("{c}")).collect()
    }

    /// Parses a single CSV record produced by [`to_csv_record`](Self::to_csv_record).
    pub fn from_csv_record(fields: &[&str]) -> Result<Self> {
        let coeffs = fields
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidParameter(format!("bad CSV scalar {f:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(coeffs)
    }
}

impl<'de> Deserialize<'de> for SeqVector {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: Deserializer<'de>,
    {
        let coeffs = Vec::<f64>::deserialize(deserializer)?;
        SeqVector::new(coeffs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn norm_l1_examples() {
        assert_eq!(SeqVector::basis(3, 8).norm_l1(), 1.0);
        assert_eq!(SeqVector::zeros(5).norm_l1(), 0.0);
        assert_eq!(SeqVector::new(vec![1.0, -2.0, 3.0]).unwrap().norm_l1(), 6.0);
    }

    #[test]
    fn norm_l2_examples() {
        assert_eq!(SeqVector::basis(5, 6).norm_l2(), 1.0);
        assert_eq!(SeqVector::new(vec![3.0, 4.0]).unwrap().norm_l2(), 5.0);
        assert_eq!(SeqVector::zeros(3).norm_l2(), 0.0);
    }

    #[test]
    fn norm_f_examples() {
        assert_eq!(SeqVector::basis(5, 5).norm_f(), 5.0);
        assert_eq!(SeqVector::new(vec![1.0, 1.0, 0.0]).unwrap().norm_f(), 3.0);
        // u_0 = (b/2)·e_2 for the default constant pack has weighted norm b.
        let p = crate::operators::derive_constants(6.0, 1.0).unwrap();
        let u0 = SeqVector::basis(2, 4).scale(p.b / 2.0);
        assert_close(u0.norm_f(), p.b, 1e-15);
        assert_close(p.b, 0.0860822, 1e-7);
    }

    #[test]
    fn dual_norm_g_examples() {
        assert_eq!(SeqVector::basis(1, 4).dual_norm_g(), 1.0);
        assert_close(SeqVector::basis(3, 4).dual_norm_g(), 1.0 / 3.0, 1e-16);
        let ramp = SeqVector::new((1..=9).map(|n| n as f64).collect()).unwrap();
        assert_eq!(ramp.dual_norm_g(), 1.0);
    }

    #[test]
    fn inner_examples() {
        let e2 = SeqVector::basis(2, 3);
        let e3 = SeqVector::basis(3, 3);
        assert_eq!(e2.inner(&e2), 1.0);
        assert_eq!(e2.inner(&e3), 0.0);
        let a = SeqVector::new(vec![1.0, 2.0]).unwrap();
        let b = SeqVector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(a.inner(&b), 11.0);
    }

    #[test]
    fn zero_padding_on_mismatched_dims() {
        let a = SeqVector::new(vec![1.0, 2.0]).unwrap();
        let b = SeqVector::new(vec![10.0, 20.0, 30.0]).unwrap();
        let sum = a.add(&b);
        assert_eq!(sum.coeffs(), &[11.0, 22.0, 30.0]);
        assert_eq!(a.inner(&b), 50.0);
        assert_eq!(b.sub(&a).coeffs(), &[9.0, 18.0, 30.0]);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(SeqVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(SeqVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let v = SeqVector::new(vec![1.5, -2.25, 0.0, 1e-10]).unwrap();
        let rec = v.to_csv_record();
        let fields: Vec<&str> = rec.iter().map(String::as_str).collect();
        let back = SeqVector::from_csv_record(&fields).unwrap();
        assert_eq!(v, back);
        assert!(SeqVector::from_csv_record(&["1.0", "abc"]).is_err());
    }

    prop_compose! {
        fn seq_vec(max_dim: usize)(coeffs in prop::collection::vec(-1e6f64..1e6, 1..max_dim)) -> SeqVector {
            SeqVector::new(coeffs).unwrap()
        }
    }

    proptest! {
        #[test]
        fn norm_chain(v in seq_vec(64)) {
            // l2 <= l1 <= F since the weights are >= 1.
            prop_assert!(v.norm_l2() <= v.norm_l1() * (1.0 + 1e-12));
            prop_assert!(v.norm_l1() <= v.norm_f() * (1.0 + 1e-12));
        }

        #[test]
        fn duality_bound(k in seq_vec(32), g in seq_vec(32)) {
            let lhs = k.inner(&g).abs();
            let rhs = k.dual_norm_g() * g.norm_f();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn homogeneity_and_triangle(u in seq_vec(32), v in seq_vec(32), a in -1e3f64..1e3) {
            let norms: [fn(&SeqVector) -> f64; 3] =
                [SeqVector::norm_l1, SeqVector::norm_l2, SeqVector::norm_f];
            for norm in norms {
                let lhs = norm(&u.scale(a));
                let rhs = a.abs() * norm(&u);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
                let tri = norm(&u.add(&v));
                prop_assert!(tri <= (norm(&u) + norm(&v)) * (1.0 + 1e-12));
            }
        }
    }
}
