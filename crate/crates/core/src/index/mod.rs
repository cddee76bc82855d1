//! Partitioned flat vector store.
//!
//! A [`GallerySnapshot`] is immutable: every mutation returns a new snapshot
//! with `version + 1` and leaves the original untouched, so searches running
//! against an older snapshot keep a stable view. [`IndexStore`] publishes
//! snapshots to concurrent readers and serializes writers.

mod prid;
mod store;

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashSet};
use std::io;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVector;

pub use prid::{load, read_prid, save, write_prid, PRID_MAGIC, PRID_VERSION};
pub use store::IndexStore;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate id: {0}")]
    DuplicateId(String),
    #[error("unknown id: {0}")]
    UnknownId(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("i/o failure: {0}")]
    IoFailure(#[from] io::Error),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),
    #[error("truncated file: header declares {declared} records, {read} complete")]
    TruncatedFile { declared: u64, read: u64 },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}

impl IndexError {
    pub fn kind(&self) -> &'static str {
        match self {
            IndexError::DuplicateId(_) => "DuplicateId",
            IndexError::UnknownId(_) => "UnknownId",
            IndexError::DimensionMismatch { .. } => "DimensionMismatch",
            IndexError::InvalidK => "InvalidK",
            IndexError::IoFailure(_) => "IoFailure",
            IndexError::BadMagic => "BadMagic",
            IndexError::VersionUnsupported(_) => "VersionUnsupported",
            IndexError::TruncatedFile { .. } => "TruncatedFile",
            IndexError::InvalidRecord(_) => "InvalidRecord",
        }
    }
}

/// One ranked neighbor. `distance` is squared Euclidean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub label: String,
    pub distance: f32,
}

/// Ranking order for hits: ascending distance, then ascending id bytes.
pub fn hit_order(a: &SearchHit, b: &SearchHit) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| a.id.as_bytes().cmp(b.id.as_bytes()))
}

/// Squared Euclidean distance, accumulated left to right in `f32`.
#[inline]
pub fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

#[derive(Debug, Clone, Default)]
pub struct GallerySnapshot {
    dim: usize,
    records: Arc<Vec<Arc<FeatureVector>>>,
    version: u64,
}

impl GallerySnapshot {
    /// An empty snapshot; its dimension is fixed by the first record added.
    pub fn new() -> Self {
        Self::default()
    }

    /// An empty snapshot with a fixed dimension.
    pub fn with_dim(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    /// Builds a snapshot at version 0 from records, validating dims and ids.
    pub fn from_records(
        dim: usize,
        records: impl IntoIterator<Item = FeatureVector>,
    ) -> Result<Self, IndexError> {
        let mut dim = dim;
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for r in records {
            if dim == 0 {
                dim = r.dim();
            }
            if r.dim() != dim {
                return Err(IndexError::DimensionMismatch {
                    expected: dim,
                    got: r.dim(),
                });
            }
            if !seen.insert(r.id().to_owned()) {
                return Err(IndexError::DuplicateId(r.id().to_owned()));
            }
            out.push(Arc::new(r));
        }
        Ok(Self {
            dim,
            records: Arc::new(out),
            version: 0,
        })
    }

    /// Vector dimension, or 0 while the snapshot has never held a record.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Arc<FeatureVector>] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&FeatureVector> {
        self.records.iter().find(|r| r.id() == id).map(|r| &**r)
    }

    pub fn contains_id(&self, id: &str) -> bool {
        self.records.iter().any(|r| r.id() == id)
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<String> {
        self.records
            .iter()
            .map(|r| r.label().to_owned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn has_class(&self, label: &str) -> bool {
        self.records.iter().any(|r| r.label() == label)
    }

    fn check_dim(&self, v: &FeatureVector) -> Result<(), IndexError> {
        if self.dim != 0 && v.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: v.dim(),
            });
        }
        Ok(())
    }

    fn successor(&self, records: Vec<Arc<FeatureVector>>, dim: usize) -> Self {
        Self {
            dim,
            records: Arc::new(records),
            version: self.version + 1,
        }
    }

    pub fn add(&self, v: FeatureVector) -> Result<Self, IndexError> {
        self.add_batch(vec![v])
    }

    /// Adds several records as one mutation (one version step).
    pub fn add_batch(&self, vs: Vec<FeatureVector>) -> Result<Self, IndexError> {
        let mut dim = self.dim;
        let mut ids: HashSet<&str> = self.records.iter().map(|r| r.id()).collect();
        for v in &vs {
            if dim == 0 {
                dim = v.dim();
            }
            if v.dim() != dim {
                return Err(IndexError::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                });
            }
            if !ids.insert(v.id()) {
                return Err(IndexError::DuplicateId(v.id().to_owned()));
            }
        }
        let mut records = Vec::with_capacity(self.records.len() + vs.len());
        records.extend(self.records.iter().cloned());
        records.extend(vs.into_iter().map(Arc::new));
        Ok(self.successor(records, dim))
    }

    pub fn remove(&self, id: &str) -> Result<Self, IndexError> {
        let pos = self
            .records
            .iter()
            .position(|r| r.id() == id)
            .ok_or_else(|| IndexError::UnknownId(id.to_owned()))?;
        let mut records = (*self.records).clone();
        records.remove(pos);
        Ok(self.successor(records, self.dim))
    }

    /// Replaces the record with `v`'s id in place.
    pub fn update(&self, v: FeatureVector) -> Result<Self, IndexError> {
        self.check_dim(&v)?;
        let pos = self
            .records
            .iter()
            .position(|r| r.id() == v.id())
            .ok_or_else(|| IndexError::UnknownId(v.id().to_owned()))?;
        let mut records = (*self.records).clone();
        records[pos] = Arc::new(v);
        Ok(self.successor(records, self.dim))
    }

    /// Splits the records into `n` contiguous ranges of `ceil(len / n)`.
    pub fn partition(&self, n: usize) -> Vec<IndexPartition<'_>> {
        partition(self, n)
    }
}

/// A contiguous slice of a snapshot owned by one searcher.
#[derive(Debug, Clone, Copy)]
pub struct IndexPartition<'a> {
    pub partition_id: usize,
    pub dim: usize,
    pub records: &'a [Arc<FeatureVector>],
}

impl<'a> IndexPartition<'a> {
    /// The whole snapshot as a single partition.
    pub fn whole(snap: &'a GallerySnapshot) -> Self {
        Self {
            partition_id: 0,
            dim: snap.dim,
            records: snap.records(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Contiguous ceiling split. Trailing partitions may be empty when `n > len`.
///
/// # Panics
/// If `n` is zero.
pub fn partition(snap: &GallerySnapshot, n: usize) -> Vec<IndexPartition<'_>> {
    assert!(n >= 1, "partition count must be at least 1");
    let total = snap.len();
    let chunk = total.div_ceil(n);
    (0..n)
        .map(|i| {
            let start = (i * chunk).min(total);
            let end = ((i + 1) * chunk).min(total);
            IndexPartition {
                partition_id: i,
                dim: snap.dim,
                records: &snap.records[start..end],
            }
        })
        .collect()
}

struct Candidate<'a> {
    distance: f32,
    record: &'a FeatureVector,
}

impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then_with(|| self.record.id().as_bytes().cmp(other.record.id().as_bytes()))
    }
}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}

/// Exact k-NN over one partition with a bounded max-heap of size `k`.
///
/// Returns at most `k` hits sorted by [`hit_order`].
pub fn knn_scan(
    part: &IndexPartition<'_>,
    query: &[f32],
    k: usize,
) -> Result<Vec<SearchHit>, IndexError> {
    if k == 0 {
        return Err(IndexError::InvalidK);
    }
    if part.dim != 0 && query.len() != part.dim {
        return Err(IndexError::DimensionMismatch {
            expected: part.dim,
            got: query.len(),
        });
    }
    let mut heap: BinaryHeap<Candidate<'_>> = BinaryHeap::with_capacity(k + 1);
    for r in part.records {
        let cand = Candidate {
            distance: squared_l2(r.values(), query),
            record: r,
        };
        if heap.len() < k {
            heap.push(cand);
        } else if let Some(mut worst) = heap.peek_mut() {
            if cand < *worst {
                *worst = cand;
            }
        }
    }
    Ok(heap
        .into_sorted_vec()
        .into_iter()
        .map(|c| SearchHit {
            id: c.record.id().to_owned(),
            label: c.record.label().to_owned(),
            distance: c.distance,
        })
        .collect())
}
