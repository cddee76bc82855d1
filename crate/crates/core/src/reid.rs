//! Open-set decisions: is a query an existing category or a new one?
//!
//! A query is `Known` when its nearest gallery hit lies within the novelty
//! threshold `tau`; the class is then the majority label among the first
//! `vote_k` hits inside `tau`. Anything else is a `NewCategory` candidate for
//! enrollment.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::features::{self, ExtractorConfig, FeatureError, FeatureVector};
use crate::index::{hit_order, squared_l2, GallerySnapshot, IndexError, SearchHit};

pub const DEFAULT_VOTE_K: usize = 5;
pub const DEFAULT_PERCENTILE: f64 = 95.0;
pub const DEFAULT_MARGIN: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ReidError {
    #[error("hits are not sorted by (distance, id) at position {0}")]
    UnsortedHits(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("class already enrolled: {0}")]
    ClassExists(String),
    #[error("hit {0} carries no label")]
    UnlabeledHit(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

impl ReidError {
    pub fn kind(&self) -> &'static str {
        match self {
            ReidError::UnsortedHits(_) => "UnsortedHits",
            ReidError::InvalidArgument(_) => "InvalidArgument",
            ReidError::InsufficientData(_) => "InsufficientData",
            ReidError::ClassExists(_) => "ClassExists",
            ReidError::UnlabeledHit(_) => "UnlabeledHit",
            ReidError::Index(e) => e.kind(),
            ReidError::Feature(e) => e.kind(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Known,
    NewCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReIDDecision {
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub class: Option<String>,
    pub confidence: f64,
    /// `f32::INFINITY` when the gallery returned nothing; serialized as `null`.
    #[serde(
        serialize_with = "finite_or_null",
        deserialize_with = "null_as_infinity"
    )]
    pub nearest_distance: f32,
}

fn finite_or_null<S: Serializer>(v: &f32, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f32(*v)
    } else {
        s.serialize_none()
    }
}

fn null_as_infinity<'de, D: Deserializer<'de>>(d: D) -> Result<f32, D::Error> {
    Ok(Option::<f32>::deserialize(d)?.unwrap_or(f32::INFINITY))
}

impl ReIDDecision {
    pub fn is_known(&self) -> bool {
        self.verdict == Verdict::Known
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Calibration {
    Fixed,
    /// Percentile of leave-one-out nearest same-class distances, scaled by `1 + margin`.
    LeaveOneOutPercentile {
        percentile: f64,
        margin: f64,
        samples: usize,
    },
}

/// Squared-distance cutoff separating known from new categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyThreshold {
    pub tau: f32,
    pub calibration: Calibration,
}

impl NoveltyThreshold {
    pub fn fixed(tau: f32) -> Result<Self, ReidError> {
        if !tau.is_finite() || tau < 0.0 {
            return Err(ReidError::InvalidArgument(format!(
                "tau must be finite and non-negative, got {tau}"
            )));
        }
        Ok(Self {
            tau,
            calibration: Calibration::Fixed,
        })
    }
}

/// Maps ranked hits to a verdict.
pub fn decide(
    hits: &[SearchHit],
    tau: &NoveltyThreshold,
    vote_k: usize,
) -> Result<ReIDDecision, ReidError> {
    if vote_k == 0 {
        return Err(ReidError::InvalidArgument("vote_k must be at least 1".into()));
    }
    if let Some(p) = hits
        .windows(2)
        .position(|w| hit_order(&w[0], &w[1]).is_gt())
    {
        return Err(ReidError::UnsortedHits(p + 1));
    }
    let Some(nearest) = hits.first() else {
        return Ok(ReIDDecision {
            verdict: Verdict::NewCategory,
            class: None,
            confidence: 1.0,
            nearest_distance: f32::INFINITY,
        });
    };
    if nearest.distance > tau.tau {
        return Ok(ReIDDecision {
            verdict: Verdict::NewCategory,
            class: None,
            confidence: 1.0,
            nearest_distance: nearest.distance,
        });
    }

    // (label, votes, rank of its nearest hit), in first-seen order.
    let mut tally: Vec<(&str, usize, usize)> = Vec::new();
    let eligible = hits
        .iter()
        .take(vote_k)
        .take_while(|h| h.distance <= tau.tau);
    let mut n_eligible = 0usize;
    for (rank, h) in eligible.enumerate() {
        if h.label.is_empty() {
            return Err(ReidError::UnlabeledHit(h.id.clone()));
        }
        n_eligible += 1;
        match tally.iter_mut().find(|(l, _, _)| *l == h.label) {
            Some(entry) => entry.1 += 1,
            None => tally.push((&h.label, 1, rank)),
        }
    }
    let (label, votes, _) = tally
        .iter()
        .copied()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
        .expect("nearest hit is eligible");
    Ok(ReIDDecision {
        verdict: Verdict::Known,
        class: Some(label.to_owned()),
        confidence: votes as f64 / n_eligible as f64,
        nearest_distance: nearest.distance,
    })
}

/// Leave-one-out nearest same-class squared distances, one per record whose
/// class has at least two members. Records with empty labels are skipped.
pub fn loo_nearest_same_class(snap: &GallerySnapshot) -> Vec<f32> {
    let records = snap.records();
    let mut out = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if r.label().is_empty() {
            continue;
        }
        let nearest = records
            .iter()
            .enumerate()
            .filter(|(j, s)| *j != i && s.label() == r.label())
            .map(|(_, s)| squared_l2(r.values(), s.values()))
            .min_by(|a, b| a.total_cmp(b));
        if let Some(d) = nearest {
            out.push(d);
        }
    }
    out
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(p/100 · n)` of the
/// ascending sample.
pub fn nearest_rank_percentile(sorted: &[f32], percentile: f64) -> f32 {
    let n = sorted.len();
    let rank = ((percentile / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Derives `tau` from the gallery alone.
pub fn calibrate_threshold(
    snap: &GallerySnapshot,
    percentile: f64,
    margin: f64,
) -> Result<NoveltyThreshold, ReidError> {
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(ReidError::InvalidArgument(format!(
            "percentile must be in (0, 100], got {percentile}"
        )));
    }
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(ReidError::InvalidArgument(format!(
            "margin must be finite and non-negative, got {margin}"
        )));
    }
    let mut dists = loo_nearest_same_class(snap);
    if dists.is_empty() {
        return Err(ReidError::InsufficientData(
            "no class has two or more records".into(),
        ));
    }
    dists.sort_by(|a, b| a.total_cmp(b));
    let base = nearest_rank_percentile(&dists, percentile);
    Ok(NoveltyThreshold {
        tau: (base as f64 * (1.0 + margin)) as f32,
        calibration: Calibration::LeaveOneOutPercentile {
            percentile,
            margin,
            samples: dists.len(),
        },
    })
}

/// Adds `vectors` under a class not yet present, as one mutation.
pub fn enroll(
    snap: &GallerySnapshot,
    vectors: Vec<FeatureVector>,
    class: &str,
) -> Result<GallerySnapshot, ReidError> {
    if class.is_empty() {
        return Err(ReidError::InvalidArgument("class label is empty".into()));
    }
    if vectors.is_empty() {
        return Err(ReidError::InvalidArgument("nothing to enroll".into()));
    }
    if snap.has_class(class) {
        return Err(ReidError::ClassExists(class.to_owned()));
    }
    let labeled = vectors.into_iter().map(|v| v.with_label(class)).collect();
    Ok(snap.add_batch(labeled)?)
}

/// Extracts each image and enrolls it with id `<class>/<file name>`.
pub fn enroll_images<P: AsRef<Path>>(
    snap: &GallerySnapshot,
    images: &[P],
    class: &str,
    cfg: &ExtractorConfig,
) -> Result<GallerySnapshot, ReidError> {
    let mut vectors = Vec::with_capacity(images.len());
    for p in images {
        let p = p.as_ref();
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| p.display().to_string());
        vectors.push(features::pipeline(p, cfg)?.into_record(format!("{class}/{name}"), class)?);
    }
    enroll(snap, vectors, class)
}

/// Pairwise check of a query against a candidate record. Returns the
/// probability that both show the same product.
pub trait PairVerifier: Send + Sync {
    fn verify(&self, query: &[f32], candidate: &FeatureVector) -> f64;
}

/// Accepts every pair.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassThroughVerifier;

impl PairVerifier for PassThroughVerifier {
    fn verify(&self, _query: &[f32], _candidate: &FeatureVector) -> f64 {
        1.0
    }
}

/// Second-stage check of a `Known` decision: the nearest hit of the winning
/// class is passed to `verifier`, and a probability below `accept` turns the
/// verdict into `NewCategory`.
pub fn verify_decision(
    decision: ReIDDecision,
    hits: &[SearchHit],
    query: &[f32],
    snap: &GallerySnapshot,
    verifier: &dyn PairVerifier,
    accept: f64,
) -> ReIDDecision {
    let Some(class) = decision.class.as_deref() else {
        return decision;
    };
    let Some(candidate) = hits
        .iter()
        .find(|h| h.label == class)
        .and_then(|h| snap.get(&h.id))
    else {
        return decision;
    };
    let p = verifier.verify(query, candidate);
    if p >= accept {
        return decision;
    }
    ReIDDecision {
        verdict: Verdict::NewCategory,
        class: None,
        confidence: 1.0 - p,
        nearest_distance: decision.nearest_distance,
    }
}
