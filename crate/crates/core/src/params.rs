//! Flat parameter vectors and the handful of vector operations the protocol needs.
//!
//! All arithmetic is plain IEEE-754 `f64` evaluated element by element; nothing
//! is fused or reordered, so the same inputs always produce the same bits.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::VectorError;

/// Participant identifier. Clients are numbered `1..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub u32);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Names the architecture a [`ParamVector`] parameterizes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ShapeTag(Arc<str>);

impl ShapeTag {
    pub fn new(tag: impl AsRef<str>) -> Self {
        ShapeTag(Arc::from(tag.as_ref()))
    }

    /// Tag for vectors that are not tied to a model layout (scalar toy losses, tests).
    pub fn raw() -> Self {
        ShapeTag::new("raw")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ShapeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Model weights, gradients and crafted updates all live in this type.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    shape: ShapeTag,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, shape: ShapeTag) -> Self {
        ParamVector { values, shape }
    }

    pub fn raw(values: Vec<f64>) -> Self {
        ParamVector::new(values, ShapeTag::raw())
    }

    pub fn zeros(len: usize, shape: ShapeTag) -> Self {
        ParamVector::new(vec![0.0; len], shape)
    }

    /// A vector of the same shape as `self` with every entry equal to `value`.
    pub fn filled_like(&self, value: f64) -> Self {
        ParamVector::new(vec![value; self.len()], self.shape.clone())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn shape(&self) -> &ShapeTag {
        &self.shape
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Maximum absolute entry; zero for an empty vector.
    pub fn inf_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// True when both vectors hold exactly the same bit patterns.
    pub fn bitwise_eq(&self, other: &ParamVector) -> bool {
        self.len() == other.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// FNV-1a over the raw bit patterns. Used to detect desynchronized replicas.
    pub fn fingerprint(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut hash = OFFSET;
        for v in &self.values {
            for byte in v.to_bits().to_le_bytes() {
                hash ^= u64::from(byte);
                hash = hash.wrapping_mul(PRIME);
            }
        }
        hash
    }

    pub(crate) fn check_compatible(&self, other: &ParamVector) -> Result<(), VectorError> {
        if self.len() != other.len() {
            return Err(VectorError::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        if self.shape != other.shape {
            return Err(VectorError::ShapeMismatch {
                left: self.shape.to_string(),
                right: other.shape.to_string(),
            });
        }
        Ok(())
    }
}

/// `y + alpha * x`.
pub fn axpy(alpha: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector, VectorError> {
    x.check_compatible(y)?;
    let values = x.values.iter().zip(&y.values).map(|(xi, yi)| yi + alpha * xi).collect();
    Ok(ParamVector::new(values, y.shape.clone()))
}

/// `a - b`.
pub fn sub(a: &ParamVector, b: &ParamVector) -> Result<ParamVector, VectorError> {
    a.check_compatible(b)?;
    let values = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    Ok(ParamVector::new(values, a.shape.clone()))
}

/// `a + b`.
pub fn add(a: &ParamVector, b: &ParamVector) -> Result<ParamVector, VectorError> {
    a.check_compatible(b)?;
    let values = a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect();
    Ok(ParamVector::new(values, a.shape.clone()))
}

pub fn scale(alpha: f64, x: &ParamVector) -> ParamVector {
    ParamVector::new(x.values.iter().map(|v| alpha * v).collect(), x.shape.clone())
}

/// Sums per-client vectors in ascending client-id order, left to right.
///
/// The caller's ordering is ignored; ids must be unique.
pub fn sum_of(items: &[(ClientId, &ParamVector)]) -> Result<ParamVector, VectorError> {
    let mut ordered: Vec<&(ClientId, &ParamVector)> = items.iter().collect();
    ordered.sort_by_key(|(id, _)| *id);
    if let Some(w) = ordered.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(VectorError::DuplicateClient(w[0].0));
    }
    let (_, first) = ordered.first().ok_or(VectorError::Empty)?;
    let mut acc = (*first).clone();
    for (_, v) in ordered.iter().skip(1) {
        acc.check_compatible(v)?;
        for (a, x) in acc.values.iter_mut().zip(&v.values) {
            *a += x;
        }
    }
    Ok(acc)
}

/// Largest absolute entry of `a - b`.
pub fn inf_distance(a: &ParamVector, b: &ParamVector) -> Result<f64, VectorError> {
    Ok(sub(a, b)?.inf_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> ParamVector {
        ParamVector::raw(xs.to_vec())
    }

    #[test]
    fn axpy_with_zero_alpha_returns_y() {
        let x = v(&[1.5, -2.0, 3.25]);
        let y = v(&[0.1, 0.2, 0.3]);
        assert!(axpy(0.0, &x, &y).unwrap().bitwise_eq(&y));
    }

    #[test]
    fn axpy_minus_one_on_self_is_zero() {
        let x = v(&[1.5, -2.0, 3.25, 1e-300]);
        let z = axpy(-1.0, &x, &x).unwrap();
        assert!(z.values().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let err = axpy(1.0, &v(&[1.0]), &v(&[1.0, 2.0])).unwrap_err();
        assert_eq!(err, VectorError::LengthMismatch { left: 1, right: 2 });
        assert!(sub(&v(&[1.0]), &v(&[])).is_err());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = ParamVector::new(vec![1.0], ShapeTag::new("a"));
        let b = ParamVector::new(vec![1.0], ShapeTag::new("b"));
        assert!(matches!(add(&a, &b), Err(VectorError::ShapeMismatch { .. })));
    }

    #[test]
    fn sum_of_rejects_duplicates_and_empty() {
        let a = v(&[1.0]);
        assert_eq!(
            sum_of(&[(ClientId(2), &a), (ClientId(2), &a)]).unwrap_err(),
            VectorError::DuplicateClient(ClientId(2))
        );
        assert_eq!(sum_of(&[]).unwrap_err(), VectorError::Empty);
    }

    #[test]
    fn inf_norm_picks_largest_magnitude() {
        assert_eq!(v(&[0.5, -3.0, 2.0]).inf_norm(), 3.0);
        assert_eq!(v(&[]).inf_norm(), 0.0);
    }

    #[test]
    fn fingerprint_tracks_bits() {
        let a = v(&[0.0, 1.0]);
        let b = v(&[-0.0, 1.0]);
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
    }

    proptest! {
        // Non-associative inputs: the canonical order must make the result
        // independent of how the caller lists the clients.
        #[test]
        fn sum_of_is_order_independent(
            rows in prop::collection::vec(prop::collection::vec(-1e12f64..1e12, 4), 2..8),
            seed in any::<u64>(),
        ) {
            let vecs: Vec<ParamVector> = rows.into_iter().map(ParamVector::raw).collect();
            let items: Vec<(ClientId, &ParamVector)> =
                vecs.iter().enumerate().map(|(i, p)| (ClientId(i as u32 + 1), p)).collect();
            let mut shuffled = items.clone();
            let n = shuffled.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            let a = sum_of(&items).unwrap();
            let b = sum_of(&shuffled).unwrap();
            prop_assert!(a.bitwise_eq(&b));
        }
    }
}
