//! Line-delimited JSON front door over TCP.
//!
//! Requests are one JSON object per line with an `op` of `query`, `enroll` or
//! `stats` and an optional correlation `id` of any JSON type, echoed in the
//! reply. Each query binds to the snapshot current when it arrives; enrolls
//! serialize through the store's writer.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::features::{self, ExtractorConfig, FeatureError, FeatureVector};
use crate::index::{self, GallerySnapshot, IndexError, IndexStore, SearchHit};
use crate::reid::{self, NoveltyThreshold, ReIDDecision, ReidError, Verdict};
use crate::search_plane::{plane_search, PlaneError, PlaneTopology, SearchRequest};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Plane(#[from] PlaneError),
    #[error(transparent)]
    Reid(#[from] ReidError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

impl ServiceError {
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::BadRequest(_) => "BadRequest",
            ServiceError::Plane(e) => e.kind(),
            ServiceError::Reid(e) => e.kind(),
            ServiceError::Feature(e) => e.kind(),
            ServiceError::Index(e) => e.kind(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum TauSource {
    Fixed { tau: f32 },
    Calibrate { percentile: f64, margin: f64 },
}

impl Default for TauSource {
    fn default() -> Self {
        TauSource::Calibrate {
            percentile: reid::DEFAULT_PERCENTILE,
            margin: reid::DEFAULT_MARGIN,
        }
    }
}

impl TauSource {
    pub fn resolve(&self, snap: &GallerySnapshot) -> Result<NoveltyThreshold, ReidError> {
        match *self {
            TauSource::Fixed { tau } => NoveltyThreshold::fixed(tau),
            TauSource::Calibrate { percentile, margin } => {
                reid::calibrate_threshold(snap, percentile, margin)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    /// Rewritten after every successful enroll when set.
    pub index_path: Option<PathBuf>,
    pub topology: PlaneTopology,
    pub tau: TauSource,
    pub extractor: ExtractorConfig,
    pub vote_k: usize,
    pub listen: SocketAddr,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            index_path: None,
            topology: PlaneTopology::default(),
            tau: TauSource::default(),
            extractor: ExtractorConfig::default(),
            vote_k: reid::DEFAULT_VOTE_K,
            listen: SocketAddr::from(([127, 0, 0, 1], 7878)),
        }
    }
}

/// Decision plus ranked hits, as printed by the CLI and returned by `query`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    #[serde(flatten)]
    pub decision: ReIDDecision,
    pub tau: f32,
    pub hits: Vec<SearchHit>,
}

impl QueryOutcome {
    pub fn verdict(&self) -> Verdict {
        self.decision.verdict
    }
}

/// Searches `snap` and decides against `tau`.
pub fn answer_query(
    snap: &GallerySnapshot,
    query: Vec<f32>,
    k: usize,
    tau: &NoveltyThreshold,
    topology: &PlaneTopology,
    vote_k: usize,
) -> Result<QueryOutcome, ServiceError> {
    let response = plane_search(topology, snap, &SearchRequest { query, k })?;
    let decision = reid::decide(&response.hits, tau, vote_k)?;
    Ok(QueryOutcome {
        decision,
        tau: tau.tau,
        hits: response.hits,
    })
}

#[derive(Debug, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
enum Request {
    Query {
        #[serde(default)]
        id: Option<Value>,
        #[serde(default)]
        vector: Option<Vec<f32>>,
        #[serde(default)]
        image: Option<PathBuf>,
        #[serde(default)]
        k: Option<usize>,
        #[serde(default)]
        tau: Option<f32>,
    },
    Enroll {
        #[serde(default)]
        id: Option<Value>,
        class: String,
        #[serde(default)]
        vectors: Option<Vec<Vec<f32>>>,
        #[serde(default)]
        images: Option<Vec<PathBuf>>,
        #[serde(default)]
        ids: Option<Vec<String>>,
    },
    Stats {
        #[serde(default)]
        id: Option<Value>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub records: usize,
    pub classes: usize,
    pub dim: usize,
    pub version: u64,
}

impl Stats {
    pub fn of(snap: &GallerySnapshot) -> Self {
        Self {
            records: snap.len(),
            classes: snap.classes().len(),
            dim: snap.dim(),
            version: snap.version(),
        }
    }
}

pub struct Service {
    store: IndexStore,
    config: ServiceConfig,
    /// Threshold for the snapshot version it was computed on.
    tau_cache: Mutex<Option<(u64, NoveltyThreshold)>>,
}

impl Service {
    pub fn new(snapshot: GallerySnapshot, config: ServiceConfig) -> Self {
        Self {
            store: IndexStore::new(snapshot),
            config,
            tau_cache: Mutex::new(None),
        }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn snapshot(&self) -> Arc<GallerySnapshot> {
        self.store.snapshot()
    }

    fn threshold(&self, snap: &GallerySnapshot) -> Result<NoveltyThreshold, ReidError> {
        if let TauSource::Fixed { tau } = self.config.tau {
            return NoveltyThreshold::fixed(tau);
        }
        let mut cache = self.tau_cache.lock().expect("tau cache poisoned");
        if let Some((version, t)) = cache.as_ref() {
            if *version == snap.version() {
                return Ok(t.clone());
            }
        }
        let t = self.config.tau.resolve(snap)?;
        *cache = Some((snap.version(), t.clone()));
        Ok(t)
    }

    /// Answers one request line with one response line (without newline).
    pub fn handle_line(&self, line: &str) -> String {
        let value: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => return error_reply(None, "BadRequest", &e.to_string()),
        };
        let id = value.get("id").cloned();
        let request: Request = match serde_json::from_value(value) {
            Ok(r) => r,
            Err(e) => return error_reply(id.as_ref(), "BadRequest", &e.to_string()),
        };
        match self.handle(request) {
            Ok(reply) => reply.to_string(),
            Err(e) => error_reply(id.as_ref(), e.kind(), &e.to_string()),
        }
    }

    fn handle(&self, request: Request) -> Result<Value, ServiceError> {
        match request {
            Request::Stats { id } => {
                let mut reply = serde_json::to_value(Stats::of(&self.snapshot())).unwrap();
                attach_id(&mut reply, id);
                Ok(reply)
            }
            Request::Query {
                id,
                vector,
                image,
                k,
                tau,
            } => {
                let snap = self.snapshot();
                let query = match (vector, image) {
                    (Some(v), None) => v,
                    (None, Some(p)) => {
                        features::pipeline(&p, &self.config.extractor)?.into_values()
                    }
                    _ => {
                        return Err(ServiceError::BadRequest(
                            "query needs exactly one of vector or image".into(),
                        ))
                    }
                };
                let threshold = match tau {
                    Some(t) => NoveltyThreshold::fixed(t)?,
                    None => self.threshold(&snap)?,
                };
                let k = k.unwrap_or(self.config.topology.k_default);
                let outcome = answer_query(
                    &snap,
                    query,
                    k,
                    &threshold,
                    &self.config.topology,
                    self.config.vote_k,
                )?;
                let mut reply = serde_json::to_value(outcome).unwrap();
                reply["version"] = json!(snap.version());
                attach_id(&mut reply, id);
                Ok(reply)
            }
            Request::Enroll {
                id,
                class,
                vectors,
                images,
                ids,
            } => {
                let records = self.enroll_records(&class, vectors, images, ids)?;
                let enrolled = records.len();
                let path = self.config.index_path.clone();
                let next = self.store.mutate(|snap| -> Result<GallerySnapshot, ServiceError> {
                    let next = reid::enroll(snap, records, &class)?;
                    if let Some(p) = &path {
                        index::save(&next, p)?;
                    }
                    Ok(next)
                })?;
                let mut reply = json!({
                    "class": class,
                    "enrolled": enrolled,
                    "version": next.version(),
                    "records": next.len(),
                });
                attach_id(&mut reply, id);
                Ok(reply)
            }
        }
    }

    fn enroll_records(
        &self,
        class: &str,
        vectors: Option<Vec<Vec<f32>>>,
        images: Option<Vec<PathBuf>>,
        ids: Option<Vec<String>>,
    ) -> Result<Vec<FeatureVector>, ServiceError> {
        let (values, default_ids): (Vec<Vec<f32>>, Vec<String>) = match (vectors, images) {
            (Some(v), None) => {
                let n = v.len();
                (v, (0..n).map(|i| format!("{class}/{i}")).collect())
            }
            (None, Some(paths)) => {
                let mut values = Vec::with_capacity(paths.len());
                let mut names = Vec::with_capacity(paths.len());
                for p in &paths {
                    values.push(features::pipeline(p, &self.config.extractor)?.into_values());
                    let name = p
                        .file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_else(|| p.display().to_string());
                    names.push(format!("{class}/{name}"));
                }
                (values, names)
            }
            _ => {
                return Err(ServiceError::BadRequest(
                    "enroll needs exactly one of vectors or images".into(),
                ))
            }
        };
        let ids = match ids {
            Some(ids) if ids.len() != values.len() => {
                return Err(ServiceError::BadRequest(format!(
                    "{} ids for {} records",
                    ids.len(),
                    values.len()
                )))
            }
            Some(ids) => ids,
            None => default_ids,
        };
        ids.into_iter()
            .zip(values)
            .map(|(id, v)| FeatureVector::new(id, class, v).map_err(ServiceError::from))
            .collect()
    }

    /// Serves one connection until the peer closes it.
    pub fn serve_connection(&self, stream: TcpStream) -> io::Result<()> {
        let mut writer = stream.try_clone()?;
        for line in BufReader::new(stream).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut reply = self.handle_line(&line);
            reply.push('\n');
            writer.write_all(reply.as_bytes())?;
            writer.flush()?;
        }
        Ok(())
    }

    /// Accepts connections forever, one thread each.
    pub fn serve(self: Arc<Self>, listener: TcpListener) -> io::Result<()> {
        for stream in listener.incoming() {
            let stream = stream?;
            let service = self.clone();
            thread::spawn(move || {
                let _ = service.serve_connection(stream);
            });
        }
        Ok(())
    }
}

fn attach_id(reply: &mut Value, id: Option<Value>) {
    if let Some(id) = id {
        reply["id"] = id;
    }
}

fn error_reply(id: Option<&Value>, kind: &str, message: &str) -> String {
    let mut reply = json!({ "error": kind, "message": message });
    if let Some(id) = id {
        reply["id"] = id.clone();
    }
    reply.to_string()
}
