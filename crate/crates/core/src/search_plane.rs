//! Three-tier query path: a blender fans a request out to brokers, each broker
//! drives its searchers concurrently over one partition apiece, merges their
//! partial top-k lists as they arrive, and the blender ranks the broker lists.
//!
//! Tiers are scoped threads talking over channels. Because [`merge_topk`] is
//! associative and commutative under the total `(distance, id)` order, the
//! response does not depend on completion order or on the topology.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::{self, hit_order, GallerySnapshot, IndexError, IndexPartition, SearchHit};

#[derive(Debug, Error)]
pub enum PlaneError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("input list {list} is not sorted at position {position}")]
    UnsortedInput { list: usize, position: usize },
    #[error(transparent)]
    Index(#[from] IndexError),
}

impl PlaneError {
    pub fn kind(&self) -> &'static str {
        match self {
            PlaneError::DimensionMismatch { .. } => "DimensionMismatch",
            PlaneError::InvalidK => "InvalidK",
            PlaneError::InvalidTopology(_) => "InvalidTopology",
            PlaneError::UnsortedInput { .. } => "UnsortedInput",
            PlaneError::Index(e) => e.kind(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaneTopology {
    pub brokers: usize,
    pub searchers_per_broker: usize,
    pub k_default: usize,
}

impl Default for PlaneTopology {
    fn default() -> Self {
        Self {
            brokers: 1,
            searchers_per_broker: 4,
            k_default: 10,
        }
    }
}

impl PlaneTopology {
    pub fn new(brokers: usize, searchers_per_broker: usize) -> Result<Self, PlaneError> {
        let t = Self {
            brokers,
            searchers_per_broker,
            ..Self::default()
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), PlaneError> {
        if self.brokers == 0 || self.searchers_per_broker == 0 || self.k_default == 0 {
            return Err(PlaneError::InvalidTopology(format!(
                "brokers={}, searchers_per_broker={}, k_default={} must all be >= 1",
                self.brokers, self.searchers_per_broker, self.k_default
            )));
        }
        Ok(())
    }

    pub fn total_searchers(&self) -> usize {
        self.brokers * self.searchers_per_broker
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub query: Vec<f32>,
    pub k: usize,
}

/// Wall-clock time spent in each tier, in microseconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TierTimings {
    pub blender_us: u64,
    /// Indexed by broker.
    pub brokers_us: Vec<u64>,
    /// Indexed by searcher (= partition id).
    pub searchers_us: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub hits: Vec<SearchHit>,
    /// Set when the gallery holds no records; `hits` is then empty.
    pub empty_gallery: bool,
    pub timings: TierTimings,
}

fn check_sorted(lists: &[&[SearchHit]]) -> Result<(), PlaneError> {
    for (li, list) in lists.iter().enumerate() {
        if let Some(p) = list
            .windows(2)
            .position(|w| hit_order(&w[0], &w[1]) == Ordering::Greater)
        {
            return Err(PlaneError::UnsortedInput {
                list: li,
                position: p + 1,
            });
        }
    }
    Ok(())
}

struct Head<'a> {
    hit: &'a SearchHit,
    list: usize,
    pos: usize,
}

impl Ord for Head<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        hit_order(self.hit, other.hit)
    }
}

impl PartialOrd for Head<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Head<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Head<'_> {}

/// k-way merge of individually sorted hit lists, keeping the `k` smallest.
pub fn merge_topk(lists: &[&[SearchHit]], k: usize) -> Result<Vec<SearchHit>, PlaneError> {
    check_sorted(lists)?;
    let mut heap: BinaryHeap<Reverse<Head<'_>>> = lists
        .iter()
        .enumerate()
        .filter_map(|(list, l)| l.first().map(|hit| Reverse(Head { hit, list, pos: 0 })))
        .collect();
    let mut out = Vec::with_capacity(k.min(lists.iter().map(|l| l.len()).sum()));
    while out.len() < k {
        let Some(Reverse(head)) = heap.pop() else {
            break;
        };
        out.push(head.hit.clone());
        let next = head.pos + 1;
        if let Some(hit) = lists[head.list].get(next) {
            heap.push(Reverse(Head {
                hit,
                list: head.list,
                pos: next,
            }));
        }
    }
    Ok(out)
}

fn micros(since: Instant) -> u64 {
    since.elapsed().as_micros() as u64
}

struct Partial {
    source: usize,
    hits: Vec<SearchHit>,
    elapsed_us: u64,
}

/// Runs one request through blender, brokers and searchers.
///
/// Broker `b` owns searchers `b * searchers_per_broker ..` and each searcher
/// scans the partition with the same index.
pub fn plane_search(
    topology: &PlaneTopology,
    snapshot: &GallerySnapshot,
    request: &SearchRequest,
) -> Result<SearchResponse, PlaneError> {
    let started = Instant::now();
    topology.validate()?;
    if request.k == 0 {
        return Err(PlaneError::InvalidK);
    }
    if snapshot.dim() != 0 && request.query.len() != snapshot.dim() {
        return Err(PlaneError::DimensionMismatch {
            expected: snapshot.dim(),
            got: request.query.len(),
        });
    }
    let total = topology.total_searchers();
    if snapshot.is_empty() {
        return Ok(SearchResponse {
            hits: Vec::new(),
            empty_gallery: true,
            timings: TierTimings {
                blender_us: micros(started),
                brokers_us: vec![0; topology.brokers],
                searchers_us: vec![0; total],
            },
        });
    }

    let partitions = index::partition(snapshot, total);
    let query = &request.query[..];
    let k = request.k;
    let mut searchers_us = vec![0u64; total];
    let mut brokers_us = vec![0u64; topology.brokers];

    let hits = thread::scope(|scope| -> Result<Vec<SearchHit>, PlaneError> {
        let (to_blender, from_brokers) = mpsc::channel::<Result<(Partial, Vec<Partial>), PlaneError>>();
        for (b, owned) in partitions.chunks(topology.searchers_per_broker).enumerate() {
            let to_blender = to_blender.clone();
            scope.spawn(move || {
                let res = run_broker(b, owned, query, k);
                // The blender outlives every broker; a send failure means it bailed early.
                let _ = to_blender.send(res);
            });
        }
        drop(to_blender);

        let mut ranked: Vec<SearchHit> = Vec::new();
        for msg in from_brokers {
            let (broker, searchers) = msg?;
            brokers_us[broker.source] = broker.elapsed_us;
            for s in searchers {
                searchers_us[s.source] = s.elapsed_us;
            }
            ranked = merge_topk(&[&ranked, &broker.hits], k)?;
        }
        Ok(ranked)
    })?;

    Ok(SearchResponse {
        hits,
        empty_gallery: false,
        timings: TierTimings {
            blender_us: micros(started),
            brokers_us,
            searchers_us,
        },
    })
}

fn run_broker(
    broker: usize,
    owned: &[IndexPartition<'_>],
    query: &[f32],
    k: usize,
) -> Result<(Partial, Vec<Partial>), PlaneError> {
    let started = Instant::now();
    thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<Result<Partial, IndexError>>();
        for part in owned {
            let tx = tx.clone();
            scope.spawn(move || {
                let t = Instant::now();
                let res = index::knn_scan(part, query, k).map(|hits| Partial {
                    source: part.partition_id,
                    hits,
                    elapsed_us: micros(t),
                });
                let _ = tx.send(res);
            });
        }
        drop(tx);

        let mut merged: Vec<SearchHit> = Vec::new();
        let mut searchers = Vec::with_capacity(owned.len());
        for msg in rx {
            let mut partial = msg?;
            merged = merge_topk(&[&merged, &partial.hits], k)?;
            partial.hits = Vec::new();
            searchers.push(partial);
        }
        Ok((
            Partial {
                source: broker,
                hits: merged,
                elapsed_us: micros(started),
            },
            searchers,
        ))
    })
}
