use std::fs;
use std::path::Path;
use std::thread;

use super::{EvalError, LabeledImage};
use crate::features::{self, ExtractorConfig, FeatureError, FeatureVector};

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "ppm", "pgm", "pnm", "pbm"];

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Lists `<dir>/<label>/<image>` files, sorted by label then file name.
/// Hidden entries and files with other extensions are skipped.
pub fn scan_dataset(dir: impl AsRef<Path>) -> Result<Vec<LabeledImage>, EvalError> {
    let mut classes: Vec<_> = fs::read_dir(dir.as_ref())?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|e| !e.file_name().to_string_lossy().starts_with('.'))
        .filter(|e| e.file_type().is_ok_and(|t| t.is_dir()))
        .collect();
    classes.sort_by_key(|e| e.file_name());
    let mut out = Vec::new();
    for class in classes {
        let label = class.file_name().to_string_lossy().into_owned();
        let mut files: Vec<_> = fs::read_dir(class.path())?
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.is_file() && is_image(p))
            .filter(|p| !p.file_name().unwrap().to_string_lossy().starts_with('.'))
            .collect();
        files.sort();
        out.extend(files.into_iter().map(|path| LabeledImage {
            path,
            label: label.clone(),
        }));
    }
    Ok(out)
}

/// Record id for an image: `<label>/<file name>`.
pub fn record_id(image: &LabeledImage) -> String {
    let name = image
        .path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    format!("{}/{}", image.label, name)
}

/// Extracts every image, in input order, on all available cores.
pub fn extract_labeled(
    images: &[LabeledImage],
    cfg: &ExtractorConfig,
) -> Result<Vec<FeatureVector>, FeatureError> {
    cfg.validate()?;
    let workers = thread::available_parallelism().map_or(1, |n| n.get());
    let chunk = images.len().div_ceil(workers).max(1);
    thread::scope(|s| {
        let handles: Vec<_> = images
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|img| {
                            features::pipeline(&img.path, cfg)?
                                .into_record(record_id(img), img.label.clone())
                        })
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(images.len());
        for h in handles {
            out.extend(h.join().expect("extraction worker panicked")?);
        }
        Ok(out)
    })
}
