//! Color-histogram descriptors over the nine augmented planes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{self, AugmentedImage, ImageRGB, ImagingError, Mask, PLANES};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid extractor config: {0}")]
    InvalidConfig(String),
    #[error("invalid feature record: {0}")]
    InvalidRecord(String),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

impl FeatureError {
    pub fn kind(&self) -> &'static str {
        match self {
            FeatureError::DimensionMismatch { .. } => "DimensionMismatch",
            FeatureError::InvalidConfig(_) => "InvalidConfig",
            FeatureError::InvalidRecord(_) => "InvalidRecord",
            FeatureError::Imaging(e) => e.kind(),
        }
    }
}

/// A labeled descriptor stored in the gallery.
///
/// `id` is non-empty and every component is finite. `label` may be empty for
/// unlabeled queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    id: String,
    label: String,
    values: Vec<f32>,
}

impl FeatureVector {
    pub fn new(
        id: impl Into<String>,
        label: impl Into<String>,
        values: Vec<f32>,
    ) -> Result<Self, FeatureError> {
        let id = id.into();
        if id.is_empty() {
            return Err(FeatureError::InvalidRecord("empty id".into()));
        }
        if values.is_empty() {
            return Err(FeatureError::InvalidRecord(format!("{id}: zero dimensions")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::InvalidRecord(format!(
                "{id}: component {i} is not finite"
            )));
        }
        Ok(Self {
            id,
            label: label.into(),
            values,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

/// Unlabeled extractor output. Attach an identity with [`Descriptor::into_record`].
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor(Vec<f32>);

impl Descriptor {
    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_values(self) -> Vec<f32> {
        self.0
    }

    pub fn into_record(
        self,
        id: impl Into<String>,
        label: impl Into<String>,
    ) -> Result<FeatureVector, FeatureError> {
        FeatureVector::new(id, label, self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    /// Histogram bins per plane.
    pub bins: u32,
    /// Square resize target in pixels.
    pub side: u32,
    /// RGB distance within which a pixel counts as background.
    pub bg_tolerance: f64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            bins: 16,
            side: 224,
            bg_tolerance: 30.0,
        }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if !(2..=256).contains(&self.bins) {
            return Err(FeatureError::InvalidConfig(format!(
                "bins must be in 2..=256, got {}",
                self.bins
            )));
        }
        if self.side < 8 {
            return Err(FeatureError::InvalidConfig(format!(
                "side must be at least 8, got {}",
                self.side
            )));
        }
        if !(0.0..=imaging::MAX_RGB_DISTANCE).contains(&self.bg_tolerance) {
            return Err(FeatureError::InvalidConfig(format!(
                "bg_tolerance must be in [0, {}], got {}",
                imaging::MAX_RGB_DISTANCE,
                self.bg_tolerance
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        PLANES * self.bins as usize
    }
}

#[inline]
pub fn bin_of(value: u8, bins: u32) -> usize {
    (value as u32 * bins / 256) as usize
}

/// Raw per-plane foreground histograms, laid out `plane * bins + bin`.
///
/// The rotated planes (6..9) are counted under the mask rotated the same way,
/// so each plane only sees the pixels that were foreground before rotation.
pub fn histogram_counts(
    img: &AugmentedImage,
    mask: &Mask,
    bins: u32,
) -> Result<Vec<u64>, FeatureError> {
    let side = img.side() as usize;
    if mask.width() != img.side() || mask.height() != img.side() {
        return Err(FeatureError::DimensionMismatch {
            expected: side * side,
            got: mask.width() as usize * mask.height() as usize,
        });
    }
    let rotated = imaging::rotate_ccw(mask.data(), side);
    let bins_us = bins as usize;
    let mut counts = vec![0u64; PLANES * bins_us];
    for (p, plane) in img.planes().enumerate() {
        let flags = if p >= 6 { &rotated[..] } else { mask.data() };
        let hist = &mut counts[p * bins_us..(p + 1) * bins_us];
        for (&v, &fg) in plane.iter().zip(flags) {
            if fg {
                hist[bin_of(v, bins)] += 1;
            }
        }
    }
    Ok(counts)
}

/// Globally L2-normalized histogram descriptor of dimension `9 * bins`.
///
/// An empty foreground yields the uniform vector `1/sqrt(dim)`.
pub fn extract(
    img: &AugmentedImage,
    mask: &Mask,
    cfg: &ExtractorConfig,
) -> Result<Descriptor, FeatureError> {
    cfg.validate()?;
    let counts = histogram_counts(img, mask, cfg.bins)?;
    Ok(Descriptor(normalize_counts(&counts)))
}

pub(crate) fn normalize_counts(counts: &[u64]) -> Vec<f32> {
    let norm_sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    if norm_sq == 0.0 {
        let u = (1.0 / (counts.len() as f64).sqrt()) as f32;
        return vec![u; counts.len()];
    }
    let norm = norm_sq.sqrt();
    counts.iter().map(|&c| (c as f64 / norm) as f32).collect()
}

/// Background removal, square resize, augmentation and extraction on an
/// already-decoded image.
pub fn pipeline_image(img: &ImageRGB, cfg: &ExtractorConfig) -> Result<Descriptor, FeatureError> {
    cfg.validate()?;
    let (clean, mask) = imaging::remove_background(img, cfg.bg_tolerance);
    let square = imaging::resize_square(&clean, cfg.side);
    let mask = mask.resize_square(cfg.side);
    let aug = imaging::augment_channels(&square)?;
    extract(&aug, &mask, cfg)
}

/// Load, then [`pipeline_image`].
pub fn pipeline(path: impl AsRef<Path>, cfg: &ExtractorConfig) -> Result<Descriptor, FeatureError> {
    let img = imaging::load_image(path)?;
    pipeline_image(&img, cfg)
}
