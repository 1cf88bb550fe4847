//! Embedding vectors and the embedders that produce them.
//!
//! Images and texts are embedded into one joint space so a single vector
//! store can answer cross-modal queries. Every embedder normalizes its
//! output to unit length; similarity everywhere else is cosine distance.
//!
//! Two implementations live here: [`ReferenceEmbedder`], a deterministic
//! model-free embedder used by tests and offline runs, and
//! [`RemoteEmbedder`], an HTTP client for a real embedding service.

mod reference;
mod remote;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use reference::{ReferenceEmbedder, REFERENCE_DIMENSION};
pub use remote::RemoteEmbedder;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("cannot embed an empty image")]
    EmptyImage,
    #[error("degenerate embedding: {0}")]
    Degenerate(String),
    #[error("remote embedder: {0}")]
    Remote(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Text,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Modality::Image => f.write_str("image"),
            Modality::Text => f.write_str("text"),
        }
    }
}

/// A unit-norm vector tagged with the modality of its source.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
    modality: Modality,
}

impl EmbeddingVector {
    /// Normalizes `values` to unit Euclidean length. Empty, non-finite, or
    /// all-zero inputs cannot be normalized and are rejected.
    pub fn unit(values: Vec<f32>, modality: Modality) -> Result<EmbeddingVector, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::Degenerate("zero-length vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::Degenerate("non-finite component".into()));
        }
        let norm = values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        if norm == 0.0 {
            return Err(EmbedError::Degenerate("zero vector".into()));
        }
        let values = values
            .into_iter()
            .map(|v| (f64::from(v) / norm) as f32)
            .collect();
        Ok(EmbeddingVector { values, modality })
    }

    /// Accepts values that were already normalized (e.g. read back from a
    /// snapshot). Re-normalizing here would perturb low-order float bits,
    /// so the norm is only verified, not recomputed into the values.
    pub(crate) fn from_unit_values(
        values: Vec<f32>,
        modality: Modality,
    ) -> Result<EmbeddingVector, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::Degenerate("non-finite component".into()));
        }
        let norm = values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        if (norm - 1.0).abs() > 1e-3 {
            return Err(EmbedError::Degenerate(format!("norm {norm} is not 1")));
        }
        Ok(EmbeddingVector { values, modality })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }
}

/// Cosine distance `1 − (a·b)/(‖a‖‖b‖)`, in `[0, 2]`.
pub fn cosine_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dimension() != b.dimension() {
        return Err(EmbedError::Dimension {
            expected: a.dimension(),
            actual: b.dimension(),
        });
    }
    let mut dot = 0.0f64;
    for (&x, &y) in a.values.iter().zip(&b.values) {
        dot += f64::from(x) * f64::from(y);
    }
    // Vectors are unit-norm by construction, but dividing by the actual
    // norms keeps the result correct even under float drift.
    let distance = 1.0 - dot / (a.norm() * b.norm());
    Ok(distance.clamp(0.0, 2.0))
}

/// Anything that can embed both images and texts into one space.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed_image(&self, image: &RgbImage) -> Result<EmbeddingVector, EmbedError>;
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(values: Vec<f32>) -> EmbeddingVector {
        EmbeddingVector::unit(values, Modality::Image).unwrap()
    }

    #[test]
    fn construction_normalizes() {
        let v = unit(vec![3.0, 4.0]);
        assert!((v.norm() - 1.0).abs() < 1e-6);
        assert!((v.values()[0] - 0.6).abs() < 1e-6);
    }

    #[test]
    fn construction_rejects_degenerate_input() {
        assert!(EmbeddingVector::unit(vec![], Modality::Text).is_err());
        assert!(EmbeddingVector::unit(vec![0.0, 0.0], Modality::Text).is_err());
        assert!(EmbeddingVector::unit(vec![f32::NAN, 1.0], Modality::Text).is_err());
        assert!(EmbeddingVector::unit(vec![f32::INFINITY], Modality::Text).is_err());
    }

    #[test]
    fn distance_identity_orthogonal_antipodal() {
        let a = unit(vec![1.0, 0.0]);
        let b = unit(vec![0.0, 1.0]);
        let neg = unit(vec![-1.0, 0.0]);
        assert_eq!(cosine_distance(&a, &a).unwrap(), 0.0);
        assert!((cosine_distance(&a, &b).unwrap() - 1.0).abs() < 1e-9);
        assert!((cosine_distance(&a, &neg).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn distance_rejects_dimension_mismatch() {
        let a = unit(vec![1.0, 0.0]);
        let b = unit(vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            cosine_distance(&a, &b),
            Err(EmbedError::Dimension {
                expected: 2,
                actual: 3
            })
        ));
    }

    #[test]
    fn distance_is_symmetric_and_scale_invariant() {
        let a = unit(vec![0.3, -0.7, 0.2, 0.9]);
        let b = unit(vec![0.1, 0.4, -0.5, 0.2]);
        let ab = cosine_distance(&a, &b).unwrap();
        let ba = cosine_distance(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        // Scaling the raw input changes nothing: normalization absorbs it.
        let scaled = unit(vec![0.6, -1.4, 0.4, 1.8]);
        assert!((cosine_distance(&scaled, &b).unwrap() - ab).abs() < 1e-6);
    }

    /// For unit vectors, cosine distance equals half the squared Euclidean
    /// distance.
    #[test]
    fn distance_matches_euclidean_identity() {
        let mut seed = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            // SplitMix64, enough randomness for a numeric identity check.
            seed = seed.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = seed;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            ((z >> 40) as f32 / (1 << 24) as f32) - 0.5
        };
        for _ in 0..50 {
            let a = unit((0..16).map(|_| next()).collect());
            let b = unit((0..16).map(|_| next()).collect());
            let cosine = cosine_distance(&a, &b).unwrap();
            let sq_euclid: f64 = a
                .values()
                .iter()
                .zip(b.values())
                .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
                .sum();
            // The stored values are unit-length only to f32 precision, so
            // the identity holds to ~1e-7, not exactly.
            assert!(
                (cosine - sq_euclid / 2.0).abs() < 1e-6,
                "{cosine} vs {sq_euclid}"
            );
        }
    }
}
