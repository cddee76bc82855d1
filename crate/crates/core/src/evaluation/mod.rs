//! Confusion-matrix evaluation, stratified splits, the synthetic bottle
//! generator and report artifacts.

mod confusion;
mod dataset;
pub mod fixtures;
mod report;
mod split;
mod synth;

use std::collections::BTreeMap;
use std::io;
use std::time::Instant;

use thiserror::Error;

use crate::features::FeatureVector;
use crate::index::GallerySnapshot;
use crate::reid::{self, NoveltyThreshold, ReidError};
use crate::search_plane::{self, PlaneError, PlaneTopology, SearchRequest};

pub use confusion::{ConfusionMatrix, Mislabel, NEW_CATEGORY};
pub use dataset::{extract_labeled, record_id, scan_dataset};
pub use report::{report, write_report, ClassRecall, Report};
pub use split::{split, Labeled};
pub use synth::{
    render, rgb_distance, synthesize, BottleShape, ClassSpec, DatasetSpec, LabeledImage, RasterFormat,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("confusion matrix holds no queries")]
    EmptyMatrix,
    #[error("class {0} has fewer than two items")]
    ClassTooSmall(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed matrix: {0}")]
    Malformed(String),
    #[error("i/o failure: {0}")]
    IoFailure(#[from] io::Error),
    #[error(transparent)]
    Plane(#[from] PlaneError),
    #[error(transparent)]
    Reid(#[from] ReidError),
}

impl EvalError {
    pub fn kind(&self) -> &'static str {
        match self {
            EvalError::EmptyMatrix => "EmptyMatrix",
            EvalError::ClassTooSmall(_) => "ClassTooSmall",
            EvalError::InvalidArgument(_) => "InvalidArgument",
            EvalError::Malformed(_) => "Malformed",
            EvalError::IoFailure(_) => "IoFailure",
            EvalError::Plane(e) => e.kind(),
            EvalError::Reid(e) => e.kind(),
        }
    }
}

/// Runs one search and one decision per query and tallies the outcomes.
///
/// Matrix classes are the gallery classes (sorted) followed by any query
/// labels absent from the gallery; rows of the latter count as correct when
/// the decision is `NewCategory`.
pub fn evaluate(
    gallery: &GallerySnapshot,
    queries: &[FeatureVector],
    topology: &PlaneTopology,
    tau: &NoveltyThreshold,
    vote_k: usize,
) -> Result<ConfusionMatrix, EvalError> {
    evaluate_with_timings(gallery, queries, topology, tau, vote_k).map(|(m, _)| m)
}

/// [`evaluate`] plus accumulated per-tier search times in microseconds.
pub fn evaluate_with_timings(
    gallery: &GallerySnapshot,
    queries: &[FeatureVector],
    topology: &PlaneTopology,
    tau: &NoveltyThreshold,
    vote_k: usize,
) -> Result<(ConfusionMatrix, BTreeMap<String, u64>), EvalError> {
    let started = Instant::now();
    let mut matrix = ConfusionMatrix::for_open_set(gallery.classes(), queries.iter().map(|q| q.label()));
    let mut timings: BTreeMap<String, u64> = BTreeMap::new();
    for q in queries {
        if q.label().is_empty() {
            return Err(EvalError::InvalidArgument(format!("query {} has no label", q.id())));
        }
        let req = SearchRequest {
            query: q.values().to_vec(),
            k: vote_k.max(1),
        };
        let resp = search_plane::plane_search(topology, gallery, &req)?;
        *timings.entry("blender".into()).or_default() += resp.timings.blender_us;
        *timings.entry("brokers_max".into()).or_default() +=
            resp.timings.brokers_us.iter().copied().max().unwrap_or(0);
        *timings.entry("searchers_max".into()).or_default() +=
            resp.timings.searchers_us.iter().copied().max().unwrap_or(0);
        let decision = reid::decide(&resp.hits, tau, vote_k)?;
        matrix.record(q.label(), decision.class.as_deref())?;
    }
    timings.insert("queries".into(), queries.len() as u64);
    timings.insert("total".into(), started.elapsed().as_micros() as u64);
    Ok((matrix, timings))
}
