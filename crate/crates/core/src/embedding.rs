use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

pub const DEFAULT_DIM: usize = 768;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddingError {
    #[error("embedding has {actual} values, expected {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding value at position {0} is not finite")]
    NonFinite(usize),
    #[error("embedding dimension must be positive")]
    ZeroDimension,
}

/// Fixed-dimension embedding with finite `f32` components.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::ZeroDimension);
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite(pos));
        }
        Ok(Self(values))
    }

    pub fn with_dim(values: Vec<f32>, dim: usize) -> Result<Self, EmbeddingError> {
        if values.len() != dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: dim,
                actual: values.len(),
            });
        }
        Self::new(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().map(|&v| v as f64 * v as f64).sum())
    }

    /// Euclidean distance with f64 accumulation.
    pub fn l2_distance(&self, other: &Self) -> f64 {
        libm::sqrt(squared_l2(&self.0, &other.0))
    }
}

pub(crate) fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Offline stand-in for an embedding model: a hashed bag of lowercase
/// alphanumeric tokens (FNV-1a 64 modulo `dim`, unit weights), L2-normalized.
/// Text without tokens hashes as one token made of the whole string.
pub fn mock_embed(text: &str, dim: usize) -> EmbeddingVector {
    assert!(dim > 0, "embedding dimension must be positive");
    let mut acc = vec![0f64; dim];
    let mut any = false;
    let mut token = alloc::string::String::new();
    let flush = |token: &mut alloc::string::String, acc: &mut [f64]| {
        if token.is_empty() {
            return false;
        }
        acc[(fnv1a(token.as_bytes()) % dim as u64) as usize] += 1.0;
        token.clear();
        true
    };
    for c in text.chars() {
        if c.is_alphanumeric() {
            token.extend(c.to_lowercase());
        } else {
            any |= flush(&mut token, &mut acc);
        }
    }
    any |= flush(&mut token, &mut acc);
    if !any {
        acc[(fnv1a(text.as_bytes()) % dim as u64) as usize] = 1.0;
    }
    let norm = libm::sqrt(acc.iter().map(|v| v * v).sum());
    EmbeddingVector(acc.into_iter().map(|v| (v / norm) as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_normalized() {
        for text in ["", "a b c", "{'id': 1, 'message': 'disk failure'}", "!!!"] {
            let a = mock_embed(text, DEFAULT_DIM);
            assert_eq!(a, mock_embed(text, DEFAULT_DIM));
            assert_eq!(a.dim(), DEFAULT_DIM);
            assert!((a.norm() - 1.0).abs() < 1e-6, "{text:?}");
        }
    }

    #[test]
    fn token_overlap_means_closer() {
        let t1 = mock_embed("a b c", DEFAULT_DIM);
        let t2 = mock_embed("a b d", DEFAULT_DIM);
        let t3 = mock_embed("x y z", DEFAULT_DIM);
        let buckets = |t: &str| -> Vec<u64> {
            t.split(' ').map(|w| fnv1a(w.as_bytes()) % DEFAULT_DIM as u64).collect()
        };
        // no collisions among the six tokens, so the geometry is exact
        let mut all: Vec<u64> = ["a b c", "d x y z"].iter().flat_map(|t| buckets(t)).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 7);
        let third = 1.0 / 3.0f64;
        let expected_12 = libm::sqrt(2.0 * third);
        let expected_13 = libm::sqrt(2.0);
        assert!((t1.l2_distance(&t2) - expected_12).abs() < 1e-6);
        assert!((t1.l2_distance(&t3) - expected_13).abs() < 1e-6);
        assert!(t1.l2_distance(&t2) < t1.l2_distance(&t3));
    }

    #[test]
    fn vector_invariants() {
        assert_eq!(
            EmbeddingVector::with_dim(vec![0.0; 512], 768),
            Err(EmbeddingError::DimensionMismatch { expected: 768, actual: 512 })
        );
        assert_eq!(EmbeddingVector::new(vec![1.0, f32::NAN]), Err(EmbeddingError::NonFinite(1)));
        assert_eq!(EmbeddingVector::new(vec![]), Err(EmbeddingError::ZeroDimension));
    }
}
