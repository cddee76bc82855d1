use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::sync::Arc;

use prodreid_core::evaluation::{self, fixtures::Fixture, DatasetSpec, LabeledImage, RasterFormat};
use prodreid_core::features;
use prodreid_core::index::{self, GallerySnapshot};
use prodreid_core::reid::{self, NoveltyThreshold};
use prodreid_core::service::{self, Service, ServiceConfig, Stats, TauSource};
use prodreid_core::{FeatureVector, PlaneTopology};
use serde_json::{json, Value};

use crate::output::{emit, out, Failure};
use crate::{
    Cli, Command, EnrollArgs, EvaluateArgs, Format, IndexArgs, PlaneArgs, Preset, QueryArgs, Raster,
    ServeArgs, SynthArgs, TauArgs,
};

type Result<T> = std::result::Result<T, Failure>;

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Index(a) => cmd_index(a, cli.format),
        Command::Query(a) => cmd_query(a, cli.format),
        Command::Enroll(a) => cmd_enroll(a, cli.format),
        Command::Evaluate(a) => cmd_evaluate(a, cli.seed, cli.format),
        Command::Synth(a) => cmd_synth(a, cli.seed, cli.format),
        Command::Serve(a) => cmd_serve(a, cli.format),
    }
}

impl PlaneArgs {
    fn topology(&self, k_default: usize) -> Result<PlaneTopology> {
        let mut t = PlaneTopology::new(self.brokers, self.searchers)?;
        t.k_default = k_default.max(1);
        Ok(t)
    }
}

impl TauArgs {
    fn source(&self) -> TauSource {
        match self.tau {
            Some(tau) => TauSource::Fixed { tau },
            None => TauSource::Calibrate {
                percentile: self.percentile,
                margin: self.margin,
            },
        }
    }

    fn resolve(&self, snap: &GallerySnapshot) -> Result<NoveltyThreshold> {
        Ok(self.source().resolve(snap)?)
    }
}

fn image_records(images: &[LabeledImage], cfg: &features::ExtractorConfig) -> Result<Vec<FeatureVector>> {
    if images.is_empty() {
        return Err(Failure::new("NoImages", "no PNG or PNM images found"));
    }
    Ok(evaluation::extract_labeled(images, cfg)?)
}

fn cmd_index(a: &IndexArgs, format: Format) -> Result<()> {
    if a.partitions == 0 {
        return Err(Failure::new("InvalidArgument", "--partitions must be at least 1"));
    }
    let cfg = a.extractor.config();
    cfg.validate()?;
    let images = evaluation::scan_dataset(&a.gallery)?;
    let records = image_records(&images, &cfg)?;
    let snap = GallerySnapshot::from_records(cfg.dim(), records)?;
    index::save(&snap, &a.out)?;
    emit(
        &json!({
            "classes": snap.classes().len(),
            "records": snap.len(),
            "dim": snap.dim(),
            "partitions": a.partitions,
            "path": a.out.display().to_string(),
        }),
        format,
    );
    Ok(())
}

/// Vectors from a JSON file (one array or an array of arrays) or a PRID file.
fn read_vectors(path: &Path) -> Result<Vec<(Option<String>, Vec<f32>)>> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(index::PRID_MAGIC) {
        let snap = index::read_prid(&bytes)?;
        return Ok(snap
            .records()
            .iter()
            .map(|r| (Some(r.id().to_owned()), r.values().to_vec()))
            .collect());
    }
    let value: Value = serde_json::from_slice(&bytes)
        .map_err(|e| Failure::new("InvalidRecord", format!("{}: {e}", path.display())))?;
    let as_vec = |v: &Value| -> Option<Vec<f32>> {
        v.as_array()?
            .iter()
            .map(|x| x.as_f64().map(|f| f as f32))
            .collect()
    };
    let rows = match value.as_array() {
        Some(items) if items.iter().all(Value::is_array) && !items.is_empty() => {
            items.iter().map(as_vec).collect::<Option<Vec<_>>>()
        }
        _ => as_vec(&value).map(|v| vec![v]),
    };
    let rows = rows.ok_or_else(|| {
        Failure::new(
            "InvalidRecord",
            format!("{}: expected an array of numbers", path.display()),
        )
    })?;
    Ok(rows.into_iter().map(|v| (None, v)).collect())
}

fn cmd_query(a: &QueryArgs, format: Format) -> Result<()> {
    let snap = index::load(&a.index)?;
    let query = match (&a.image, &a.vector) {
        (Some(img), _) => features::pipeline(img, &a.extractor.config())?.into_values(),
        (None, Some(path)) => read_vectors(path)?
            .into_iter()
            .next()
            .map(|(_, v)| v)
            .ok_or_else(|| Failure::new("InvalidRecord", "vector file holds no records"))?,
        (None, None) => unreachable!("clap enforces one input"),
    };
    let topology = a.plane.topology(a.k)?;
    let tau = a.tau.resolve(&snap)?;
    let outcome = service::answer_query(&snap, query, a.k, &tau, &topology, a.tau.vote_k)?;
    emit(&serde_json::to_value(outcome).expect("plain data"), format);
    Ok(())
}

fn cmd_enroll(a: &EnrollArgs, format: Format) -> Result<()> {
    let snap = index::load(&a.index)?;
    let cfg = a.extractor.config();
    let records = if let Some(path) = &a.vectors {
        read_vectors(path)?
            .into_iter()
            .enumerate()
            .map(|(i, (id, v))| {
                let id = id.unwrap_or_else(|| format!("{}/{i}", a.class));
                FeatureVector::new(id, a.class.as_str(), v)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?
    } else {
        let paths = match &a.dir {
            Some(dir) => {
                let mut files: Vec<_> = fs::read_dir(dir)?
                    .collect::<std::result::Result<Vec<_>, _>>()?
                    .into_iter()
                    .map(|e| e.path())
                    .filter(|p| p.is_file())
                    .collect();
                files.sort();
                files
            }
            None => a.images.clone(),
        };
        let images: Vec<LabeledImage> = paths
            .into_iter()
            .map(|path| LabeledImage {
                path,
                label: a.class.clone(),
            })
            .filter(|img| a.dir.is_none() || has_image_extension(&img.path))
            .collect();
        image_records(&images, &cfg)?
    };
    let next = reid::enroll(&snap, records, &a.class)?;
    index::save(&next, &a.index)?;
    emit(
        &json!({
            "class": a.class,
            "enrolled": next.len() - snap.len(),
            "records": next.len(),
            "version": next.version(),
        }),
        format,
    );
    Ok(())
}

fn has_image_extension(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| ["png", "ppm", "pgm", "pnm", "pbm"].contains(&e.to_ascii_lowercase().as_str()))
}

fn cmd_evaluate(a: &EvaluateArgs, seed: u64, format: Format) -> Result<()> {
    let (matrix, timings) = if let Some(name) = &a.fixture {
        let fixture = Fixture::parse(name)
            .ok_or_else(|| Failure::new("InvalidArgument", format!("unknown fixture {name}")))?;
        (fixture.matrix()?, Default::default())
    } else {
        let (gallery, queries) = if let Some(dir) = &a.dataset {
            let cfg = a.extractor.config();
            cfg.validate()?;
            let records = image_records(&evaluation::scan_dataset(dir)?, &cfg)?;
            let (g, q) = evaluation::split(records, a.train_fraction, seed)?;
            (GallerySnapshot::from_records(cfg.dim(), g)?, q)
        } else {
            let gallery = index::load(a.gallery.as_ref().expect("clap enforces a source"))?;
            let queries = index::load(a.queries.as_ref().expect("clap requires queries"))?;
            let q = queries.records().iter().map(|r| (**r).clone()).collect();
            (gallery, q)
        };
        let tau = a.tau.resolve(&gallery)?;
        let topology = a.plane.topology(a.tau.vote_k)?;
        evaluation::evaluate_with_timings(&gallery, &queries, &topology, &tau, a.tau.vote_k)?
    };
    if let Some(out) = &a.out {
        evaluation::write_report(&matrix, &timings, out)?;
    }
    match format {
        Format::Csv => out(&matrix.to_csv()),
        Format::Json => {
            let r = evaluation::report(&matrix, &timings)?;
            emit(&serde_json::to_value(r).expect("plain data"), format);
        }
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs, seed: u64, format: Format) -> Result<()> {
    let spec = match a.preset {
        Preset::Bottles18 => DatasetSpec::bottles18(a.images_per_class, seed),
        Preset::Separated => {
            if a.classes > 27 {
                return Err(Failure::new("InvalidArgument", "--classes is at most 27"));
            }
            DatasetSpec::separated(a.classes, a.images_per_class, a.jitter, seed)
        }
    };
    let raster = match a.raster {
        Raster::Png => RasterFormat::Png,
        Raster::Ppm => RasterFormat::Ppm,
    };
    let written = evaluation::synthesize(&spec, &a.out, raster)?;
    emit(
        &json!({
            "classes": spec.classes.len(),
            "images": written.len(),
            "out": a.out.display().to_string(),
        }),
        format,
    );
    Ok(())
}

fn cmd_serve(a: &ServeArgs, format: Format) -> Result<()> {
    let snap = if a.index.exists() {
        index::load(&a.index)?
    } else {
        GallerySnapshot::new()
    };
    let listener = TcpListener::bind((a.host.as_str(), a.port))?;
    let listen = listener.local_addr()?;
    let config = ServiceConfig {
        index_path: a.persist.then(|| a.index.clone()),
        topology: a.plane.topology(a.k)?,
        tau: a.tau.source(),
        extractor: a.extractor.config(),
        vote_k: a.tau.vote_k,
        listen,
    };
    let stats = Stats::of(&snap);
    let service = Arc::new(Service::new(snap, config));
    let mut banner = serde_json::to_value(stats).expect("plain data");
    banner["listening"] = json!(listen.to_string());
    emit(&banner, format);
    service.serve(listener)?;
    Ok(())
}
