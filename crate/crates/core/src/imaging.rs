//! Raster loading, background masking, square resizing and 9-plane channel
//! augmentation.
//!
//! Every image that reaches feature extraction goes through the same chain:
//! decode (alpha composited on white), mask the background estimated from the
//! image border, resample to a square, then expand RGB into nine planes:
//! `[R, G, B, 255-R, 255-G, 255-B, rot(R), rot(G), rot(B)]` where `rot` is a
//! 90° counter-clockwise rotation.

use std::fs;
use std::io::{self, Cursor, Write};
use std::path::{Path, PathBuf};

use image::{ImageError, ImageFormat, ImageReader};
use thiserror::Error;

/// Number of planes in an [`AugmentedImage`].
pub const PLANES: usize = 9;

/// Largest possible Euclidean distance between two RGB triples, rounded up.
pub const MAX_RGB_DISTANCE: f64 = 441.0;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image data: {0}")]
    CorruptData(String),
    #[error("non-square input: {width}x{height}")]
    NonSquareInput { width: u32, height: u32 },
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
}

impl ImagingError {
    /// Stable machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            ImagingError::MissingFile(_) => "MissingFile",
            ImagingError::UnsupportedFormat(_) => "UnsupportedFormat",
            ImagingError::CorruptData(_) => "CorruptData",
            ImagingError::NonSquareInput { .. } => "NonSquareInput",
            ImagingError::InvalidDimensions(_) => "InvalidDimensions",
            ImagingError::Io(_) => "IoFailure",
        }
    }
}

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRGB {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl ImageRGB {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidDimensions(format!(
                "{width}x{height} has no pixels"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(ImagingError::InvalidDimensions(format!(
                "expected {expected} bytes for {width}x{height}, got {}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// An image filled with one color.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ImagingError> {
        let n = width as usize * height as usize;
        Self::new(width, height, rgb.repeat(n))
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    /// Binary PPM (P6) encoding.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    /// PNG encoding; deterministic for identical pixels.
    pub fn to_png(&self) -> Result<Vec<u8>, ImagingError> {
        let buf = image::RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length checked at construction");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png)
            .map_err(|e| ImagingError::Io(io::Error::other(e)))?;
        Ok(out.into_inner())
    }
}

/// Per-pixel foreground flags; `true` marks foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32, data: Vec<bool>) -> Result<Self, ImagingError> {
        if data.len() != width as usize * height as usize {
            return Err(ImagingError::InvalidDimensions(format!(
                "mask of {width}x{height} needs {} flags, got {}",
                width as usize * height as usize,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![true; width as usize * height as usize],
        }
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn is_foreground(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&f| f).count()
    }

    /// Nearest-neighbor resample with the same index rule as [`resize_square`].
    pub fn resize_square(&self, side: u32) -> Mask {
        let data = resample(&self.data, 1, self.width, self.height, side);
        Mask {
            width: side,
            height: side,
            data,
        }
    }
}

/// Decodes a PNG or binary PPM file. Transparent pixels are composited on white.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageRGB, ImagingError> {
    let path = path.as_ref();
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(ImagingError::MissingFile(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    decode_image(&bytes)
}

/// Decodes PNG or PPM bytes; see [`load_image`].
pub fn decode_image(bytes: &[u8]) -> Result<ImageRGB, ImagingError> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| ImagingError::CorruptData(e.to_string()))?;
    match reader.format() {
        Some(ImageFormat::Png) => png_chunks_complete(bytes)?,
        Some(ImageFormat::Pnm) => {}
        Some(other) => return Err(ImagingError::UnsupportedFormat(format!("{other:?}"))),
        None => return Err(ImagingError::UnsupportedFormat("unrecognized header".into())),
    }
    let decoded = reader.decode().map_err(|e| match e {
        ImageError::Unsupported(u) => ImagingError::UnsupportedFormat(u.to_string()),
        other => ImagingError::CorruptData(other.to_string()),
    })?;
    let rgba = decoded.to_rgba8();
    let (width, height) = rgba.dimensions();
    let mut data = Vec::with_capacity(width as usize * height as usize * 3);
    for px in rgba.pixels() {
        let a = px[3] as u32;
        for c in 0..3 {
            let v = px[c] as u32;
            data.push(((v * a + 255 * (255 - a) + 127) / 255) as u8);
        }
    }
    ImageRGB::new(width, height, data)
}

/// Walks the chunk list; the decoder itself accepts files cut after the
/// image data.
fn png_chunks_complete(bytes: &[u8]) -> Result<(), ImagingError> {
    let mut pos = 8usize;
    while pos + 8 <= bytes.len() {
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let kind = &bytes[pos + 4..pos + 8];
        let end = pos
            .checked_add(12)
            .and_then(|p| p.checked_add(len))
            .ok_or_else(|| ImagingError::CorruptData("chunk length overflow".into()))?;
        if end > bytes.len() {
            break;
        }
        if kind == b"IEND" {
            return Ok(());
        }
        pos = end;
    }
    Err(ImagingError::CorruptData("truncated PNG: no IEND chunk".into()))
}

/// Estimated background: per-channel lower median of the 1-pixel border.
pub fn estimate_background(img: &ImageRGB) -> [u8; 3] {
    let (w, h) = (img.width, img.height);
    let mut channels: [Vec<u8>; 3] = Default::default();
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                let p = img.pixel(x, y);
                for c in 0..3 {
                    channels[c].push(p[c]);
                }
            }
        }
    }
    let mut out = [0u8; 3];
    for c in 0..3 {
        let v = &mut channels[c];
        v.sort_unstable();
        out[c] = v[(v.len() - 1) / 2];
    }
    out
}

/// Masks every pixel within `bg_tolerance` (Euclidean, RGB) of the estimated
/// background and paints it white. Foreground pixels are left untouched.
pub fn remove_background(img: &ImageRGB, bg_tolerance: f64) -> (ImageRGB, Mask) {
    let bg = estimate_background(img);
    let tol = bg_tolerance.max(0.0);
    let tol_sq = tol * tol;
    let mut out = img.data.clone();
    let mut flags = Vec::with_capacity(img.pixel_count());
    for px in out.chunks_exact_mut(3) {
        let d2: i32 = (0..3)
            .map(|c| {
                let d = px[c] as i32 - bg[c] as i32;
                d * d
            })
            .sum();
        let background = d2 as f64 <= tol_sq;
        if background {
            px.copy_from_slice(&[255, 255, 255]);
        }
        flags.push(!background);
    }
    (
        ImageRGB {
            width: img.width,
            height: img.height,
            data: out,
        },
        Mask {
            width: img.width,
            height: img.height,
            data: flags,
        },
    )
}

/// Source index for destination index `dst_index`: `floor((dst_index + 0.5) * src / dst)`.
#[inline]
pub fn nearest_source_index(dst_index: u32, src: u32, dst: u32) -> u32 {
    let idx = ((2 * dst_index as u64 + 1) * src as u64) / (2 * dst as u64);
    (idx as u32).min(src - 1)
}

fn resample<T: Copy>(data: &[T], stride: usize, width: u32, height: u32, side: u32) -> Vec<T> {
    let xs: Vec<usize> = (0..side)
        .map(|x| nearest_source_index(x, width, side) as usize)
        .collect();
    let mut out = Vec::with_capacity(side as usize * side as usize * stride);
    for y in 0..side {
        let sy = nearest_source_index(y, height, side) as usize;
        let row = sy * width as usize;
        for &sx in &xs {
            let i = (row + sx) * stride;
            out.extend_from_slice(&data[i..i + stride]);
        }
    }
    out
}

/// Nearest-neighbor resample to `side`×`side`.
///
/// # Panics
/// If `side` is zero.
pub fn resize_square(img: &ImageRGB, side: u32) -> ImageRGB {
    assert!(side >= 1, "resize target must be at least one pixel");
    ImageRGB {
        width: side,
        height: side,
        data: resample(&img.data, 3, img.width, img.height, side),
    }
}

/// Rotates a square row-major plane 90° counter-clockwise.
pub fn rotate_ccw<T: Copy>(plane: &[T], side: usize) -> Vec<T> {
    debug_assert_eq!(plane.len(), side * side);
    let mut out = Vec::with_capacity(plane.len());
    for r in 0..side {
        for c in 0..side {
            // new(r, c) = old(c, side - 1 - r)
            out.push(plane[c * side + (side - 1 - r)]);
        }
    }
    out
}

/// Per-element `255 - v`.
pub fn invert_plane(plane: &[u8]) -> Vec<u8> {
    plane.iter().map(|&v| 255 - v).collect()
}

/// Nine square 8-bit planes: RGB, inverted RGB, rotated RGB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedImage {
    side: u32,
    data: Vec<u8>,
}

impl AugmentedImage {
    pub fn side(&self) -> u32 {
        self.side
    }

    fn plane_len(&self) -> usize {
        self.side as usize * self.side as usize
    }

    /// Plane `k` in `0..9`.
    pub fn plane(&self, k: usize) -> &[u8] {
        let n = self.plane_len();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn planes(&self) -> impl Iterator<Item = &[u8]> {
        self.data.chunks_exact(self.plane_len())
    }

    /// Writes each plane as a binary PGM (P5) named `{stem}_p{k}.pgm`.
    pub fn write_pgm_planes(&self, dir: impl AsRef<Path>, stem: &str) -> io::Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut written = Vec::with_capacity(PLANES);
        for (k, plane) in self.planes().enumerate() {
            let path = dir.join(format!("{stem}_p{k}.pgm"));
            let mut f = io::BufWriter::new(fs::File::create(&path)?);
            write!(f, "P5\n{} {}\n255\n", self.side, self.side)?;
            f.write_all(plane)?;
            f.flush()?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Splits a square image into the nine augmented planes.
pub fn augment_channels(img: &ImageRGB) -> Result<AugmentedImage, ImagingError> {
    if !img.is_square() {
        return Err(ImagingError::NonSquareInput {
            width: img.width,
            height: img.height,
        });
    }
    let side = img.width as usize;
    let n = side * side;
    let mut rgb: [Vec<u8>; 3] = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for px in img.data.chunks_exact(3) {
        for c in 0..3 {
            rgb[c].push(px[c]);
        }
    }
    let mut data = Vec::with_capacity(n * PLANES);
    for plane in &rgb {
        data.extend_from_slice(plane);
    }
    for plane in &rgb {
        data.extend(plane.iter().map(|&v| 255 - v));
    }
    for plane in &rgb {
        data.extend(rotate_ccw(plane, side));
    }
    Ok(AugmentedImage {
        side: img.width,
        data,
    })
}
