//! Exact flat L2 nearest-neighbor index.

use alloc::collections::{BTreeSet, BinaryHeap};
use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

use crate::embedding::{squared_l2, EmbeddingVector};
use crate::record::{LogRecord, RecordId};
use crate::render::{render_document, DocumentText, RenderError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndexError {
    #[error("cannot build an index from no vectors")]
    EmptyInput,
    #[error("vector at position {position} has dimension {actual}, index dimension is {expected}")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        position: usize,
    },
    #[error("record id {0} appears more than once")]
    DuplicateId(RecordId),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("neighbor {0} is not among the supplied training records")]
    UnknownRecord(RecordId),
    #[error(transparent)]
    Render(#[from] RenderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IndexMetadata {
    /// Seconds since the Unix epoch.
    pub built_at: u64,
    /// SHA-256 of the training subset the vectors were computed from.
    pub source_hash: [u8; 32],
}

/// Immutable dense matrix of embeddings with their record ids, in
/// insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex {
    dim: usize,
    ids: Vec<RecordId>,
    data: Vec<f32>,
    metadata: IndexMetadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    /// Insertion position of the entry.
    pub position: usize,
    pub id: RecordId,
    /// True Euclidean distance.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedNeighbor {
    pub record_id: RecordId,
    pub distance: f64,
    pub snippet: DocumentText,
}

struct Candidate {
    dist: f64,
    position: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.position.cmp(&other.position))
    }
}

impl FlatIndex {
    pub fn build(
        pairs: impl IntoIterator<Item = (RecordId, EmbeddingVector)>,
        metadata: IndexMetadata,
    ) -> Result<Self, IndexError> {
        let mut pairs = pairs.into_iter().peekable();
        let dim = pairs.peek().ok_or(IndexError::EmptyInput)?.1.dim();
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (position, (id, vector)) in pairs.enumerate() {
            if vector.dim() != dim {
                return Err(IndexError::DimensionMismatch {
                    expected: dim,
                    actual: vector.dim(),
                    position,
                });
            }
            ids.push(id);
            data.extend_from_slice(vector.values());
        }
        Self::from_parts(dim, ids, data, metadata)
    }

    /// Reassembles an index from its stored parts, re-checking invariants.
    pub fn from_parts(
        dim: usize,
        ids: Vec<RecordId>,
        data: Vec<f32>,
        metadata: IndexMetadata,
    ) -> Result<Self, IndexError> {
        if ids.is_empty() || dim == 0 {
            return Err(IndexError::EmptyInput);
        }
        if data.len() != ids.len() * dim {
            return Err(IndexError::DimensionMismatch {
                expected: dim,
                actual: data.len() / ids.len(),
                position: 0,
            });
        }
        let mut seen = BTreeSet::new();
        for id in &ids {
            if !seen.insert(id) {
                return Err(IndexError::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            dim,
            ids,
            data,
            metadata,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[RecordId] {
        &self.ids
    }

    /// Row-major `len() x dim()` matrix.
    pub fn matrix(&self) -> &[f32] {
        &self.data
    }

    pub fn metadata(&self) -> &IndexMetadata {
        &self.metadata
    }

    pub fn vector(&self, position: usize) -> &[f32] {
        &self.data[position * self.dim..(position + 1) * self.dim]
    }

    /// The `min(k, len)` nearest entries by Euclidean distance, ascending,
    /// ties going to the earlier insertion position.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<Hit>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                actual: query.dim(),
                position: 0,
            });
        }
        let k = k.min(self.len());
        let q = query.values();
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        for (position, row) in self.data.chunks_exact(self.dim).enumerate() {
            let candidate = Candidate {
                dist: squared_l2(q, row),
                position,
            };
            if heap.len() < k {
                heap.push(candidate);
            } else if let Some(mut worst) = heap.peek_mut() {
                if candidate < *worst {
                    *worst = candidate;
                }
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| Hit {
                position: c.position,
                id: self.ids[c.position].clone(),
                distance: libm::sqrt(c.dist),
            })
            .collect())
    }
}

/// Pairs hits with the labeled rendering of their training records.
pub fn attach_snippets<'a>(
    hits: Vec<Hit>,
    lookup: impl Fn(&RecordId) -> Option<&'a LogRecord>,
) -> Result<Vec<RetrievedNeighbor>, IndexError> {
    hits.into_iter()
        .map(|hit| {
            let record = lookup(&hit.id).ok_or_else(|| IndexError::UnknownRecord(hit.id.clone()))?;
            Ok(RetrievedNeighbor {
                snippet: render_document(record, true)?,
                record_id: hit.id,
                distance: hit.distance,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn v(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    fn small() -> FlatIndex {
        FlatIndex::build(
            [
                (RecordId::Int(10), v(&[0.0, 0.0])),
                (RecordId::Int(11), v(&[3.0, 4.0])),
                (RecordId::Int(12), v(&[1.0, 0.0])),
                (RecordId::Int(13), v(&[0.0, 1.0])),
            ],
            IndexMetadata::default(),
        )
        .unwrap()
    }

    #[test]
    fn self_match_first_with_zero_distance() {
        let index = small();
        let hits = index.search(&v(&[3.0, 4.0]), 1).unwrap();
        assert_eq!(hits[0].id, RecordId::Int(11));
        assert_eq!(hits[0].distance, 0.0);
    }

    #[test]
    fn ties_go_to_insertion_order() {
        let index = small();
        let hits = index.search(&v(&[0.0, 0.0]), 3).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.id.clone()).collect();
        assert_eq!(ids, vec![RecordId::Int(10), RecordId::Int(12), RecordId::Int(13)]);
    }

    #[test]
    fn k_clamps_to_size() {
        let index = small();
        let hits = index.search(&v(&[0.0, 0.0]), 50).unwrap();
        assert_eq!(hits.len(), 4);
        assert_eq!(hits[3].distance, 5.0);
        assert!(hits.windows(2).all(|w| w[0].distance <= w[1].distance));
    }

    #[test]
    fn build_errors() {
        let empty: Vec<(RecordId, EmbeddingVector)> = vec![];
        assert_eq!(
            FlatIndex::build(empty, IndexMetadata::default()),
            Err(IndexError::EmptyInput)
        );
        assert_eq!(
            FlatIndex::build(
                [(RecordId::Int(1), v(&[0.0])), (RecordId::Int(1), v(&[1.0]))],
                IndexMetadata::default()
            ),
            Err(IndexError::DuplicateId(RecordId::Int(1)))
        );
        assert!(matches!(
            FlatIndex::build(
                [(RecordId::Int(1), v(&[0.0])), (RecordId::Int(2), v(&[1.0, 2.0]))],
                IndexMetadata::default()
            ),
            Err(IndexError::DimensionMismatch { expected: 1, actual: 2, position: 1 })
        ));
        let single =
            FlatIndex::build([(RecordId::Int(1), v(&[0.5]))], IndexMetadata::default()).unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn search_errors() {
        let index = small();
        assert_eq!(index.search(&v(&[0.0, 0.0]), 0), Err(IndexError::InvalidK));
        assert!(matches!(
            index.search(&v(&[0.0]), 1),
            Err(IndexError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn snippets_carry_labels() {
        let records = [
            LogRecord::new(10, "a").with_severity(crate::SeverityLevel::ERROR),
            LogRecord::new(12, "b").with_severity(crate::SeverityLevel::INFO),
        ];
        let index = small();
        let hits = index.search(&v(&[0.9, 0.0]), 2).unwrap();
        let neighbors =
            attach_snippets(hits, |id| records.iter().find(|r| &r.id == id)).unwrap();
        assert_eq!(neighbors[0].record_id, RecordId::Int(12));
        assert!(neighbors[0].snippet.text.ends_with("'severity': 6"));
        let hits = index.search(&v(&[3.0, 4.0]), 1).unwrap();
        assert_eq!(
            attach_snippets(hits, |id| records.iter().find(|r| &r.id == id)),
            Err(IndexError::UnknownRecord(RecordId::Int(11)))
        );
    }
}
