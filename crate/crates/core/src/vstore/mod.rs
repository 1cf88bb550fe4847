//! The vector store: embeddings with class-label metadata, exact top-k
//! cosine search, label filtering, and snapshot persistence.
//!
//! Search is a deliberate brute-force scan. A full leaflet index holds
//! around nine thousand vectors, which scans in well under a millisecond;
//! an approximate index would buy nothing and cost determinism. Ties are
//! broken by ascending insertion id so results are fully reproducible.

mod snapshot;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{cosine_distance, EmbeddingVector, Modality};

pub use snapshot::SnapshotError;

#[derive(Debug, Error)]
pub enum VstoreError {
    #[error("dimension mismatch: store dimension {expected}, vector dimension {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("search on an empty store")]
    EmptyStore,
    #[error("embedding metadata must be non-empty: {0}")]
    EmptyMetadata(&'static str),
}

/// Unique insertion id, assigned by the store in insertion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StoreId(pub u64);

impl std::fmt::Display for StoreId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One record: a unit-norm vector plus the metadata retrieval hands back.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredEmbedding {
    pub store_id: StoreId,
    pub label: String,
    pub item_id: String,
    pub vector: EmbeddingVector,
}

impl StoredEmbedding {
    pub fn modality(&self) -> Modality {
        self.vector.modality()
    }
}

/// A search result; `distance` is the cosine distance to the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub store_id: StoreId,
    pub label: String,
    pub item_id: String,
    pub modality: Modality,
    pub distance: f64,
}

/// In-memory store of image and text embeddings in one joint index, so both
/// modalities compete in the same top-k.
#[derive(Debug, Default)]
pub struct VectorStore {
    dimension: Option<usize>,
    records: Vec<StoredEmbedding>,
    next_id: u64,
}

impl VectorStore {
    pub fn new() -> VectorStore {
        VectorStore::default()
    }

    /// Adds a vector with its metadata, returning the assigned id. The
    /// first insert fixes the store's dimension; every later insert must
    /// match it.
    pub fn add(
        &mut self,
        vector: EmbeddingVector,
        label: impl Into<String>,
        item_id: impl Into<String>,
    ) -> Result<StoreId, VstoreError> {
        let label = label.into();
        let item_id = item_id.into();
        if label.is_empty() {
            return Err(VstoreError::EmptyMetadata("label"));
        }
        if item_id.is_empty() {
            return Err(VstoreError::EmptyMetadata("item_id"));
        }
        match self.dimension {
            None => self.dimension = Some(vector.dimension()),
            Some(expected) if expected != vector.dimension() => {
                return Err(VstoreError::Dimension {
                    expected,
                    actual: vector.dimension(),
                });
            }
            Some(_) => {}
        }
        let store_id = StoreId(self.next_id);
        self.next_id += 1;
        self.records.push(StoredEmbedding {
            store_id,
            label,
            item_id,
            vector,
        });
        Ok(store_id)
    }

    /// Exact top-k by cosine distance: hits sorted by ascending distance,
    /// ties by ascending store id, truncated to `min(k, len)`.
    pub fn search_topk(
        &self,
        query: &EmbeddingVector,
        k: usize,
    ) -> Result<Vec<RetrievalHit>, VstoreError> {
        if self.records.is_empty() {
            return Err(VstoreError::EmptyStore);
        }
        let expected = self.dimension.expect("non-empty store has a dimension");
        if query.dimension() != expected {
            return Err(VstoreError::Dimension {
                expected,
                actual: query.dimension(),
            });
        }
        let mut hits: Vec<RetrievalHit> = self
            .records
            .iter()
            .map(|record| RetrievalHit {
                store_id: record.store_id,
                label: record.label.clone(),
                item_id: record.item_id.clone(),
                modality: record.modality(),
                distance: cosine_distance(query, &record.vector).expect("dimensions checked above"),
            })
            .collect();
        hits.sort_unstable_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then(a.store_id.cmp(&b.store_id))
        });
        hits.truncate(k);
        Ok(hits)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    pub fn modality_count(&self, modality: Modality) -> usize {
        self.records
            .iter()
            .filter(|r| r.modality() == modality)
            .count()
    }

    pub fn iter(&self) -> impl Iterator<Item = &StoredEmbedding> {
        self.records.iter()
    }
}

/// The subsequence of `hits` carrying `label`, order preserved.
pub fn filter_by_label(hits: &[RetrievalHit], label: &str) -> Vec<RetrievalHit> {
    hits.iter()
        .filter(|hit| hit.label == label)
        .cloned()
        .collect()
}
