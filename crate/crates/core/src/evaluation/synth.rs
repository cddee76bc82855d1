//! Deterministic synthetic bottle images.
//!
//! Each image is a flat bottle silhouette (neck, shoulder, body) filled with
//! the class color plus a per-image offset drawn uniformly from
//! `[-jitter, +jitter]` per channel, shaded horizontally like a cylinder, on a
//! black or white background chosen to contrast with the class color.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalError, Labeled};
use crate::imaging::ImageRGB;

pub const MAX_JITTER: u8 = 64;

/// Silhouette proportions, all in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BottleShape {
    /// Bottle height over canvas height.
    pub height: f64,
    /// Body width over canvas width.
    pub width: f64,
    /// Neck width over body width.
    pub neck: f64,
}

impl BottleShape {
    pub const TALL: BottleShape = BottleShape { height: 0.85, width: 0.38, neck: 0.35 };
    pub const STOUT: BottleShape = BottleShape { height: 0.7, width: 0.55, neck: 0.5 };
    pub const CUP: BottleShape = BottleShape { height: 0.6, width: 0.6, neck: 0.9 };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub label: String,
    pub color: [u8; 3],
    pub shape: BottleShape,
    pub jitter: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub classes: Vec<ClassSpec>,
    pub images_per_class: usize,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RasterFormat {
    Png,
    Ppm,
}

impl RasterFormat {
    pub fn extension(self) -> &'static str {
        match self {
            RasterFormat::Png => "png",
            RasterFormat::Ppm => "ppm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pub path: PathBuf,
    pub label: String,
}

impl Labeled for LabeledImage {
    fn label(&self) -> &str {
        &self.label
    }
}

pub fn rgb_distance(a: [u8; 3], b: [u8; 3]) -> f64 {
    a.iter()
        .zip(&b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

const SHAPES: [BottleShape; 3] = [BottleShape::TALL, BottleShape::STOUT, BottleShape::CUP];

impl DatasetSpec {
    pub const DEFAULT_WIDTH: u32 = 96;
    pub const DEFAULT_HEIGHT: u32 = 128;

    /// Up to 27 classes colored from the grid `{30, 130, 230}³`, so every pair
    /// of base colors is at least 100 apart. Labels are `class00`, `class01`, ...
    pub fn separated(classes: usize, images_per_class: usize, jitter: u8, seed: u64) -> Self {
        assert!(classes <= 27, "the separated palette holds 27 colors");
        const LEVELS: [u8; 3] = [30, 130, 230];
        let classes = (0..classes)
            .map(|i| ClassSpec {
                label: format!("class{i:02}"),
                color: [LEVELS[i / 9], LEVELS[(i / 3) % 3], LEVELS[i % 3]],
                shape: SHAPES[i % SHAPES.len()],
                jitter,
            })
            .collect();
        Self {
            classes,
            images_per_class,
            seed,
            width: Self::DEFAULT_WIDTH,
            height: Self::DEFAULT_HEIGHT,
        }
    }

    /// Eighteen bottle classes modeled on a water-bottle line, including
    /// several near-identical whites and blacks.
    pub fn bottles18(images_per_class: usize, seed: u64) -> Self {
        use BottleShape as S;
        let table: [(&str, [u8; 3], BottleShape); 18] = [
            ("babyblue01", [170, 210, 235], S::TALL),
            ("babyblue02", [160, 200, 240], S::STOUT),
            ("beige01", [225, 205, 170], S::TALL),
            ("black bottle", [25, 25, 25], S::TALL),
            ("black cup", [35, 30, 30], S::CUP),
            ("black tumbler", [30, 30, 38], S::STOUT),
            ("blue", [40, 80, 200], S::TALL),
            ("lavender01", [185, 160, 220], S::STOUT),
            ("red01", [200, 30, 40], S::TALL),
            ("red02", [170, 25, 30], S::STOUT),
            ("silver", [190, 190, 195], S::STOUT),
            ("white", [252, 252, 252], S::TALL),
            ("white01", [240, 240, 235], S::STOUT),
            ("white02", [250, 248, 244], S::TALL),
            ("white03", [247, 246, 250], S::TALL),
            ("white cup", [245, 245, 245], S::CUP),
            ("yellow02", [240, 210, 60], S::TALL),
            ("yellow03", [230, 190, 40], S::STOUT),
        ];
        Self {
            classes: table
                .iter()
                .map(|&(label, color, shape)| ClassSpec {
                    label: label.to_owned(),
                    color,
                    shape,
                    jitter: 8,
                })
                .collect(),
            images_per_class,
            seed,
            width: Self::DEFAULT_WIDTH,
            height: Self::DEFAULT_HEIGHT,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidArgument(m));
        if self.width < 8 || self.height < 8 {
            return bad(format!("canvas {}x{} is below 8x8", self.width, self.height));
        }
        let mut seen = HashSet::new();
        for c in &self.classes {
            if c.label.is_empty() || c.label.contains(['/', '\\']) || c.label.starts_with('.') {
                return bad(format!("label {:?} is not usable as a directory name", c.label));
            }
            if !seen.insert(&c.label) {
                return bad(format!("duplicate label {}", c.label));
            }
            if c.jitter > MAX_JITTER {
                return bad(format!("{}: jitter {} exceeds {MAX_JITTER}", c.label, c.jitter));
            }
            let s = c.shape;
            if [s.height, s.width, s.neck].iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
                return bad(format!("{}: shape ratios must be in (0, 1]", c.label));
            }
        }
        Ok(())
    }

    /// Smallest pairwise RGB distance between class base colors.
    pub fn min_color_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.classes.iter().enumerate() {
            for b in &self.classes[i + 1..] {
                best = best.min(rgb_distance(a.color, b.color));
            }
        }
        best
    }
}

/// Black for light colors, white for dark ones.
pub fn contrasting_background(color: [u8; 3]) -> [u8; 3] {
    let luma = 0.299 * color[0] as f64 + 0.587 * color[1] as f64 + 0.114 * color[2] as f64;
    if luma >= 128.0 {
        [0, 0, 0]
    } else {
        [255, 255, 255]
    }
}

/// Renders image `index` of class `class`.
///
/// # Panics
/// If `class` is out of range.
pub fn render(spec: &DatasetSpec, class: usize, index: usize) -> ImageRGB {
    let c = &spec.classes[class];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(((class as u64) << 32) | index as u64);
    let amp = c.jitter as i32;
    let offset: [i32; 3] = std::array::from_fn(|_| rng.gen_range(-amp..=amp));

    let (w, h) = (spec.width as f64, spec.height as f64);
    let bg = contrasting_background(c.color);
    let mut img = ImageRGB::filled(spec.width, spec.height, bg).expect("validated canvas");

    let bottle_h = c.shape.height * h;
    let body_half = c.shape.width * w / 2.0;
    let neck_half = c.shape.neck * body_half;
    let top = (h - bottle_h) / 2.0;
    let neck_end = top + 0.25 * bottle_h;
    let shoulder_end = top + 0.35 * bottle_h;
    let bottom = top + bottle_h;
    let cx = w / 2.0;

    for y in 0..spec.height {
        let yc = y as f64 + 0.5;
        if yc < top || yc >= bottom {
            continue;
        }
        let half = if yc < neck_end {
            neck_half
        } else if yc < shoulder_end {
            let t = (yc - neck_end) / (shoulder_end - neck_end);
            neck_half + t * (body_half - neck_half)
        } else {
            body_half
        };
        for x in 0..spec.width {
            let dx = (x as f64 + 0.5 - cx).abs();
            if dx > half {
                continue;
            }
            let shade = 1.0 - 0.3 * (dx / body_half).powi(2);
            let px: [u8; 3] = std::array::from_fn(|ch| {
                let v = (c.color[ch] as i32 + offset[ch]) as f64 * shade;
                v.round().clamp(0.0, 255.0) as u8
            });
            img.set_pixel(x, y, px);
        }
    }
    img
}

/// Writes `<out>/<label>/<label>_<nnn>.<ext>` for every class and image.
pub fn synthesize(
    spec: &DatasetSpec,
    out_dir: impl AsRef<Path>,
    format: RasterFormat,
) -> Result<Vec<LabeledImage>, EvalError> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    let mut written = Vec::with_capacity(spec.classes.len() * spec.images_per_class);
    for (ci, class) in spec.classes.iter().enumerate() {
        let dir = out_dir.join(&class.label);
        fs::create_dir_all(&dir)?;
        for i in 0..spec.images_per_class {
            let img = render(spec, ci, i);
            let bytes = match format {
                RasterFormat::Png => img
                    .to_png()
                    .map_err(|e| EvalError::IoFailure(std::io::Error::other(e)))?,
                RasterFormat::Ppm => img.to_ppm(),
            };
            let path = dir.join(format!("{}_{i:03}.{}", class.label, format.extension()));
            fs::write(&path, bytes)?;
            written.push(LabeledImage {
                path,
                label: class.label.clone(),
            });
        }
    }
    Ok(written)
}
