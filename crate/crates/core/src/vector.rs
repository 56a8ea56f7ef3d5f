//! Dense embedding vectors and the f64 kernels used for every distance.
//!
//! Components are stored as `f32` (encoder precision); all arithmetic is
//! carried out in `f64`. Sums are accumulated left to right in index order so
//! that independent re-implementations reproduce results bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the L2 norm of a vector flagged as normalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Wraps `values`, rejecting empty and non-finite input.
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("embedding must have at least one component"));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "embedding".into(),
                index,
            });
        }
        Ok(Self(values))
    }

    /// Builds from f64 components, rounding to f32 storage.
    pub fn from_f64(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| v as f32).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| {
                let v = f64::from(v);
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_NORM_TOLERANCE
    }

    /// Returns the direction of this vector, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let unit = normalize(&self.to_f64())?;
        Some(Self(unit.into_iter().map(|v| v as f32).collect()))
    }
}

impl AsRef<[f32]> for EmbeddingVector {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

/// Cosine similarity; `None` if either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(dot(a, b) / (na * nb))
}

pub fn normalize(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    Some(a.iter().map(|v| v / n).collect())
}

/// Component-wise mean: sum in the given order, then divide by the count.
pub fn mean<'a, I>(vectors: I, dim: usize) -> Option<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f32]>,
{
    let mut sum = vec![0.0f64; dim];
    let mut count = 0usize;
    for v in vectors {
        debug_assert_eq!(v.len(), dim);
        for (s, &x) in sum.iter_mut().zip(v) {
            *s += f64::from(x);
        }
        count += 1;
    }
    if count == 0 {
        return None;
    }
    let n = count as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Some(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            EmbeddingVector::new(vec![1.0, f32::NAN]),
            Err(Error::NonFinite { index: 1, .. })
        ));
        assert!(EmbeddingVector::new(vec![f32::INFINITY]).is_err());
        assert!(EmbeddingVector::new(vec![]).is_err());
    }

    #[test]
    fn three_four_five() {
        let v = EmbeddingVector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(v.norm(), 5.0);
        let u = v.normalized().unwrap();
        assert!((f64::from(u.as_slice()[0]) - 0.6).abs() < 1e-7);
        assert!((f64::from(u.as_slice()[1]) - 0.8).abs() < 1e-7);
        assert!(u.is_unit());
    }

    #[test]
    fn zero_vector_has_no_direction() {
        let v = EmbeddingVector::new(vec![0.0, 0.0]).unwrap();
        assert!(v.normalized().is_none());
        assert!(cosine(&[0.0, 0.0], &[1.0, 0.0]).is_none());
    }

    #[test]
    fn mean_of_midpoint() {
        let a = [0.0f32, 0.0];
        let b = [2.0f32, 2.0];
        let m = mean([&a[..], &b[..]], 2).unwrap();
        assert_eq!(m, vec![1.0, 1.0]);
        assert!(mean(std::iter::empty(), 2).is_none());
    }
}
