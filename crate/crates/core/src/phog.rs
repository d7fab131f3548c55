//! Pyramid histograms of oriented gradients.
//!
//! The image is divided into a spatial pyramid: level `l` splits it into a
//! `2^l x 2^l` grid of cells. Every cell yields its own orientation
//! histogram. Histograms are *not* concatenated into one global vector; each
//! one is a separate local descriptor that the forest codebook consumes.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Row-major raster with one or three channels (interleaved RGB).
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidConfig(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch {
                expected: width * height * channels,
                found: data.len(),
            });
        }
        Ok(RasterImage {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_gray_u8(width: usize, height: usize, data: &[u8]) -> Result<Self> {
        Self::new(width, height, 1, data.iter().map(|&b| b as f64).collect())
    }

    pub fn from_rgb_u8(width: usize, height: usize, data: &[u8]) -> Result<Self> {
        Self::new(width, height, 3, data.iter().map(|&b| b as f64).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Luma plane (0.299 R + 0.587 G + 0.114 B for colour input).
    pub fn to_gray(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.data.clone();
        }
        self.data
            .chunks_exact(3)
            .map(|px| LUMA[0] * px[0] + LUMA[1] * px[1] + LUMA[2] * px[2])
            .collect()
    }

    /// Multiply every intensity by `factor`.
    pub fn scaled(&self, factor: f64) -> RasterImage {
        RasterImage {
            data: self.data.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Rotate the image 90 degrees counter-clockwise.
    pub fn rotated_90(&self) -> RasterImage {
        let (w, h, c) = (self.width, self.height, self.channels);
        let mut data = vec![0.0; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                // (x, y) -> (y, w - 1 - x) in a h-wide, w-tall image
                let (nx, ny) = (y, w - 1 - x);
                for ch in 0..c {
                    data[(ny * h + nx) * c + ch] = self.data[(y * w + x) * c + ch];
                }
            }
        }
        RasterImage {
            width: h,
            height: w,
            channels: c,
            data,
        }
    }
}

/// Serialized as its span in degrees (180 or 360).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum AngleRange {
    /// Unsigned orientation, gradients folded into `[0, 180)`.
    Half,
    /// Signed orientation in `[0, 360)`.
    Full,
}

impl AngleRange {
    pub fn degrees(self) -> f64 {
        match self {
            AngleRange::Half => 180.0,
            AngleRange::Full => 360.0,
        }
    }

    pub fn from_degrees(deg: u32) -> Result<Self> {
        match deg {
            180 => Ok(AngleRange::Half),
            360 => Ok(AngleRange::Full),
            other => Err(Error::InvalidConfig(format!(
                "angle range must be 180 or 360, got {other}"
            ))),
        }
    }
}

impl TryFrom<u32> for AngleRange {
    type Error = Error;

    fn try_from(deg: u32) -> Result<Self> {
        AngleRange::from_degrees(deg)
    }
}

impl From<AngleRange> for u32 {
    fn from(r: AngleRange) -> u32 {
        r.degrees() as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhogConfig {
    /// Pyramid levels beyond level 0; level `l` has `4^l` cells.
    pub levels: usize,
    pub bins: usize,
    pub angle_range: AngleRange,
    /// Pixels with gradient magnitude at or below this value do not vote.
    pub edge_threshold: f64,
}

impl Default for PhogConfig {
    fn default() -> Self {
        PhogConfig {
            levels: 3,
            bins: 20,
            angle_range: AngleRange::Half,
            edge_threshold: 0.0,
        }
    }
}

impl PhogConfig {
    /// Two pyramid levels for tiny (32x32) images.
    pub fn cifar() -> Self {
        PhogConfig {
            levels: 2,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::InvalidConfig(format!(
                "PHOG needs at least 2 bins, got {}",
                self.bins
            )));
        }
        if !(self.edge_threshold >= 0.0) {
            return Err(Error::InvalidConfig(
                "edge threshold must be non-negative".into(),
            ));
        }
        if self.levels > 15 {
            return Err(Error::InvalidConfig(format!(
                "{} pyramid levels is unreasonable",
                self.levels
            )));
        }
        Ok(())
    }

    /// Number of cells over all levels, `sum_{l=0}^{L} 4^l`.
    pub fn cell_count(&self) -> usize {
        (0..=self.levels).map(|l| 1usize << (2 * l)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f64>,
    pub level: usize,
    /// Row-major index of the cell within its level's grid.
    pub cell_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    pub descriptors: Vec<Descriptor>,
}

impl ImageFeatures {
    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.descriptors.first().map(|d| d.values.len())
    }
}

/// Per-pixel image gradients from centered differences (one-sided at the
/// border).
#[derive(Debug, Clone)]
pub struct GradientField {
    width: usize,
    height: usize,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl GradientField {
    pub fn from_gray(width: usize, height: usize, gray: &[f64]) -> Self {
        assert_eq!(gray.len(), width * height);
        let at = |x: usize, y: usize| gray[y * width + x];
        let mut gx = vec![0.0; gray.len()];
        let mut gy = vec![0.0; gray.len()];
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                gx[i] = if width < 2 {
                    0.0
                } else if x == 0 {
                    at(1, y) - at(0, y)
                } else if x == width - 1 {
                    at(x, y) - at(x - 1, y)
                } else {
                    0.5 * (at(x + 1, y) - at(x - 1, y))
                };
                gy[i] = if height < 2 {
                    0.0
                } else if y == 0 {
                    at(x, 1) - at(x, 0)
                } else if y == height - 1 {
                    at(x, y) - at(x, y - 1)
                } else {
                    0.5 * (at(x, y + 1) - at(x, y - 1))
                };
            }
        }
        GradientField {
            width,
            height,
            gx,
            gy,
        }
    }

    /// Unnormalized magnitude-weighted orientation histogram over the window
    /// `[x0, x1) x [y0, y1)`.
    pub fn window_histogram(
        &self,
        (x0, x1): (usize, usize),
        (y0, y1): (usize, usize),
        bins: usize,
        range: AngleRange,
        edge_threshold: f64,
    ) -> Vec<f64> {
        let mut hist = vec![0.0; bins];
        let span = range.degrees();
        let bin_width = span / bins as f64;
        for y in y0..y1.min(self.height) {
            for x in x0..x1.min(self.width) {
                let i = y * self.width + x;
                let (dx, dy) = (self.gx[i], self.gy[i]);
                let mag = dx.hypot(dy);
                if !(mag > edge_threshold) {
                    continue;
                }
                let mut theta = dy.atan2(dx).to_degrees().rem_euclid(span);
                if theta >= span {
                    theta = 0.0;
                }
                let bin = ((theta / bin_width) as usize).min(bins - 1);
                hist[bin] += mag;
            }
        }
        hist
    }
}

/// Orientation histogram of a standalone grayscale patch (gradients are taken
/// within the patch itself). The result is not normalized.
pub fn gradient_histogram(
    width: usize,
    height: usize,
    cell_pixels: &[f64],
    bins: usize,
    angle_range: AngleRange,
    edge_threshold: f64,
) -> Vec<f64> {
    let field = GradientField::from_gray(width, height, cell_pixels);
    field.window_histogram((0, width), (0, height), bins, angle_range, edge_threshold)
}

/// L1-normalize in place; an all-zero histogram becomes uniform.
pub fn normalize_l1(hist: &mut [f64]) {
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter_mut().for_each(|v| *v /= total);
    } else {
        let u = 1.0 / hist.len() as f64;
        hist.iter_mut().for_each(|v| *v = u);
    }
}

pub fn extract(image: &RasterImage, cfg: &PhogConfig) -> Result<ImageFeatures> {
    cfg.validate()?;
    let side = 1usize << cfg.levels;
    if image.width < side || image.height < side {
        return Err(Error::ImageTooSmall {
            width: image.width,
            height: image.height,
            levels: cfg.levels,
        });
    }
    let gray = image.to_gray();
    let field = GradientField::from_gray(image.width, image.height, &gray);
    let mut descriptors = Vec::with_capacity(cfg.cell_count());
    for level in 0..=cfg.levels {
        let n = 1usize << level;
        for row in 0..n {
            let ys = (row * image.height / n, (row + 1) * image.height / n);
            for col in 0..n {
                let xs = (col * image.width / n, (col + 1) * image.width / n);
                let mut values =
                    field.window_histogram(xs, ys, cfg.bins, cfg.angle_range, cfg.edge_threshold);
                normalize_l1(&mut values);
                descriptors.push(Descriptor {
                    values,
                    level,
                    cell_index: row * n + col,
                });
            }
        }
    }
    Ok(ImageFeatures { descriptors })
}

const DUMP_MAGIC: &[u8; 4] = b"PHOG";
const DUMP_VERSION: u32 = 1;

/// Write descriptor blocks: `"PHOG"`, version, image count, L, B (all u32
/// little-endian), then per image `cell_count * B` little-endian f32 values.
pub fn write_dump<W: Write>(mut w: W, cfg: &PhogConfig, images: &[ImageFeatures]) -> Result<()> {
    w.write_all(DUMP_MAGIC)?;
    for v in [
        DUMP_VERSION,
        images.len() as u32,
        cfg.levels as u32,
        cfg.bins as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    let expected = cfg.cell_count();
    for feats in images {
        if feats.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: feats.len(),
            });
        }
        for d in &feats.descriptors {
            if d.values.len() != cfg.bins {
                return Err(Error::DimensionMismatch {
                    expected: cfg.bins,
                    found: d.values.len(),
                });
            }
            for &v in &d.values {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Read a descriptor dump. Returns `(levels, bins, images)`.
pub fn read_dump<R: Read>(mut r: R) -> Result<(usize, usize, Vec<ImageFeatures>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(Error::Format("not a PHOG descriptor dump".into()));
    }
    let mut word = || -> Result<u32> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    };
    let version = word()?;
    if version != DUMP_VERSION {
        return Err(Error::Format(format!("unsupported PHOG dump version {version}")));
    }
    let count = word()? as usize;
    let levels = word()? as usize;
    let bins = word()? as usize;
    let cells: usize = (0..=levels).map(|l| 1usize << (2 * l)).sum();
    let mut images = Vec::with_capacity(count);
    let mut buf = vec![0u8; cells * bins * 4];
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        let mut floats = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
        let mut descriptors = Vec::with_capacity(cells);
        for level in 0..=levels {
            for cell_index in 0..(1usize << (2 * level)) {
                let values: Vec<f64> = floats.by_ref().take(bins).collect();
                descriptors.push(Descriptor {
                    values,
                    level,
                    cell_index,
                });
            }
        }
        images.push(ImageFeatures { descriptors });
    }
    Ok((levels, bins, images))
}
