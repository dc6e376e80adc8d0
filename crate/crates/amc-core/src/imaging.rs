//! Constellation-diagram image encodings.
//!
//! Four stages build on each other: a binary occupancy image, a grayscale
//! sample-count image, an enhanced grayscale image where every sample
//! spreads an exponentially decaying influence over nearby pixel centroids,
//! and a three-channel composition of enhanced images with increasing decay
//! rates. All rasterization is deterministic: samples are accumulated in
//! ascending index order.

use crate::scalar::{lit, Scalar};
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};
use ndarray::{Array2, Array3};
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use std::fmt;

/// The rendered window of the complex plane and its pixel resolution.
///
/// The window covers `[-scale, +scale]` on both axes. Pixel `(0, 0)` is the
/// top-left bin (most negative real, most positive imaginary); bins are
/// half-open, so a sample exactly on an interior boundary belongs to the
/// higher-index bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagePlaneSpec {
    pub scale: f64,
    pub width_px: usize,
    pub height_px: usize,
}

impl ImagePlaneSpec {
    pub fn new(scale: f64, width_px: usize, height_px: usize) -> Result<Self, ImagingError> {
        let spec = ImagePlaneSpec { scale, width_px, height_px };
        spec.validate()?;
        Ok(spec)
    }

    /// Square window, the common case.
    pub fn square(scale: f64, side_px: usize) -> Result<Self, ImagingError> {
        Self::new(scale, side_px, side_px)
    }

    pub fn validate(&self) -> Result<(), ImagingError> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(ImagingError::InvalidPlane(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        if self.width_px == 0 || self.height_px == 0 {
            return Err(ImagingError::InvalidPlane("zero pixel dimension".into()));
        }
        Ok(())
    }

    /// Sample position in pixel units: x grows with the real part, y grows
    /// downward (decreasing imaginary part). The centroid of pixel `(r, c)`
    /// is at `(c + 0.5, r + 0.5)`.
    pub fn pixel_coords<S: Scalar>(&self, sample: Complex<S>) -> (S, S) {
        let scale: S = lit(self.scale);
        let bin_w: S = lit(2.0 * self.scale / self.width_px as f64);
        let bin_h: S = lit(2.0 * self.scale / self.height_px as f64);
        ((sample.re + scale) / bin_w, (scale - sample.im) / bin_h)
    }

    /// Half-open bin assignment; `None` for samples outside the window.
    pub fn bin<S: Scalar>(&self, sample: Complex<S>) -> Option<(usize, usize)> {
        let (x, y) = self.pixel_coords(sample);
        let col = x.floor().to_i64()?;
        let row = y.floor().to_i64()?;
        if col < 0 || row < 0 || col >= self.width_px as i64 || row >= self.height_px as i64 {
            return None;
        }
        Some((row as usize, col as usize))
    }
}

/// Exponential-decay influence parameters for the enhanced grayscale image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayParams {
    /// Decay rate per pixel unit of distance.
    pub alpha: f64,
    /// Samples farther than this (in pixel units) from a centroid contribute
    /// nothing to that pixel.
    pub cutoff_radius_px: f64,
    pub power_mode: PowerMode,
}

impl DecayParams {
    pub fn validate(&self) -> Result<(), ImagingError> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(ImagingError::InvalidPlane(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.cutoff_radius_px >= 1.0) {
            return Err(ImagingError::InvalidPlane(format!(
                "cutoff radius must be >= 1 px, got {}",
                self.cutoff_radius_px
            )));
        }
        Ok(())
    }
}

impl Default for DecayParams {
    fn default() -> Self {
        DecayParams { alpha: 1.0, cutoff_radius_px: 4.0, power_mode: PowerMode::Unit }
    }
}

/// What counts as a sample's power `P` in its influence `P * exp(-alpha d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMode {
    /// Every sample contributes with unit power.
    Unit,
    /// Samples contribute `|s|^2`.
    MagnitudeSquared,
}

/// Non-negative intensity grid over an image plane.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayGrid<S> {
    pub values: Array2<S>,
    pub plane: ImagePlaneSpec,
}

impl<S: Scalar> GrayGrid<S> {
    fn zeros(plane: ImagePlaneSpec) -> Self {
        GrayGrid { values: Array2::zeros((plane.height_px, plane.width_px)), plane }
    }

    pub fn max_value(&self) -> S {
        self.values.iter().copied().fold(S::zero(), S::max)
    }

    pub fn total(&self) -> S {
        self.values.sum()
    }
}

/// 8-bit three-channel image over an image plane; shape `(height, width, 3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub pixels: Array3<u8>,
    pub plane: ImagePlaneSpec,
}

impl RgbImage {
    pub fn width(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[0]
    }
}

/// A rasterized grid together with the number of samples that fell outside
/// the window and were dropped.
#[derive(Debug, Clone)]
pub struct Rasterized<S> {
    pub grid: GrayGrid<S>,
    pub dropped: usize,
}

/// Errors from the imaging stage.
#[derive(Debug)]
pub enum ImagingError {
    InvalidPlane(String),
    /// The three channel decay rates must be strictly increasing.
    NonDistinctAlphas([f64; 3]),
    EncodingFailure(String),
    DecodingFailure(String),
}

impl fmt::Display for ImagingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImagingError::InvalidPlane(msg) => write!(f, "invalid imaging parameters: {msg}"),
            ImagingError::NonDistinctAlphas(a) => {
                write!(f, "channel decay rates must be strictly increasing, got {a:?}")
            }
            ImagingError::EncodingFailure(msg) => write!(f, "PNG encoding failed: {msg}"),
            ImagingError::DecodingFailure(msg) => write!(f, "PNG decoding failed: {msg}"),
        }
    }
}

impl std::error::Error for ImagingError {}

/// Binary occupancy image: 1.0 where at least one sample lands, else 0.0.
pub fn rasterize_binary<S: Scalar>(samples: &[Complex<S>], plane: ImagePlaneSpec) -> Rasterized<S> {
    let counts = rasterize_gray(samples, plane);
    Rasterized {
        grid: GrayGrid {
            values: counts.grid.values.mapv(|v| if v > S::zero() { S::one() } else { S::zero() }),
            plane,
        },
        dropped: counts.dropped,
    }
}

/// Sample-count image: each entry is the number of samples in that bin.
pub fn rasterize_gray<S: Scalar>(samples: &[Complex<S>], plane: ImagePlaneSpec) -> Rasterized<S> {
    let mut grid = GrayGrid::zeros(plane);
    let mut dropped = 0usize;
    for &s in samples {
        match plane.bin(s) {
            Some((r, c)) => grid.values[[r, c]] += S::one(),
            None => dropped += 1,
        }
    }
    Rasterized { grid, dropped }
}

/// Enhanced grayscale image with the exponential-decay influence model.
///
/// Each pixel accumulates, over samples in ascending index order, the
/// influence `P * exp(-alpha * d)` of every sample within
/// `cutoff_radius_px` of its centroid, with `d` the sample-to-centroid
/// distance in pixel units and `P` given by the power mode.
pub fn enhance_gray<S: Scalar>(
    samples: &[Complex<S>],
    plane: ImagePlaneSpec,
    decay: &DecayParams,
) -> GrayGrid<S> {
    let mut grid = GrayGrid::zeros(plane);
    let alpha: S = lit(decay.alpha);
    let cutoff: S = lit(decay.cutoff_radius_px);
    let half: S = lit(0.5);
    let (w, h) = (plane.width_px as i64, plane.height_px as i64);

    for &s in samples {
        let (x, y) = plane.pixel_coords(s);
        let power = match decay.power_mode {
            PowerMode::Unit => S::one(),
            PowerMode::MagnitudeSquared => s.norm_sqr(),
        };
        // Bounding box of centroids possibly within the cutoff. The casts
        // saturate, so an infinite cutoff covers the whole grid.
        let c_lo = ((x - cutoff - half).floor().to_f64().unwrap() as i64).clamp(0, w);
        let c_hi = (((x + cutoff).ceil().to_f64().unwrap() + 1.0) as i64).clamp(0, w);
        let r_lo = ((y - cutoff - half).floor().to_f64().unwrap() as i64).clamp(0, h);
        let r_hi = (((y + cutoff).ceil().to_f64().unwrap() + 1.0) as i64).clamp(0, h);
        for r in r_lo..r_hi {
            for c in c_lo..c_hi {
                let dx = x - (S::from_i64(c).unwrap() + half);
                let dy = y - (S::from_i64(r).unwrap() + half);
                let d = (dx * dx + dy * dy).sqrt();
                if d <= cutoff {
                    let cell = &mut grid.values[[r as usize, c as usize]];
                    *cell = *cell + power * (-alpha * d).exp();
                }
            }
        }
    }
    grid
}

/// Three-channel composition: one enhanced grayscale image per decay rate,
/// all from the identical sample set, each affinely normalized to 8 bits by
/// its own maximum (an all-zero channel stays zero).
pub fn compose_three_channel<S: Scalar>(
    samples: &[Complex<S>],
    plane: ImagePlaneSpec,
    alphas: [f64; 3],
    power_mode: PowerMode,
    cutoff_radius_px: f64,
) -> Result<RgbImage, ImagingError> {
    plane.validate()?;
    if !(alphas[0] < alphas[1] && alphas[1] < alphas[2]) {
        return Err(ImagingError::NonDistinctAlphas(alphas));
    }
    let mut pixels = Array3::zeros((plane.height_px, plane.width_px, 3));
    for (channel, &alpha) in alphas.iter().enumerate() {
        let decay = DecayParams { alpha, cutoff_radius_px, power_mode };
        decay.validate()?;
        let grid = enhance_gray(samples, plane, &decay);
        let max = grid.max_value();
        if max > S::zero() {
            let full: S = lit(255.0);
            for r in 0..plane.height_px {
                for c in 0..plane.width_px {
                    let v = (full * grid.values[[r, c]] / max).round();
                    pixels[[r, c, channel]] = v.to_u8().unwrap_or(255);
                }
            }
        }
    }
    Ok(RgbImage { pixels, plane })
}

/// Integer nearest-neighbor upscale: every source pixel becomes a
/// `factor x factor` block.
pub fn upscale(img: &RgbImage, factor: usize) -> RgbImage {
    assert!(factor >= 1, "upscale factor must be >= 1");
    let (h, w) = (img.height(), img.width());
    let mut pixels = Array3::zeros((h * factor, w * factor, 3));
    for r in 0..h * factor {
        for c in 0..w * factor {
            for ch in 0..3 {
                pixels[[r, c, ch]] = img.pixels[[r / factor, c / factor, ch]];
            }
        }
    }
    RgbImage { pixels, plane: img.plane }
}

/// Lossless 8-bit RGB PNG bytes with fixed encoder settings, so identical
/// images always produce identical byte sequences.
pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, ImagingError> {
    let raw = flatten_pixels(&img.pixels);
    let mut bytes = Vec::new();
    let encoder =
        PngEncoder::new_with_quality(&mut bytes, CompressionType::Default, FilterType::Adaptive);
    encoder
        .write_image(&raw, img.width() as u32, img.height() as u32, ExtendedColorType::Rgb8)
        .map_err(|e| ImagingError::EncodingFailure(e.to_string()))?;
    Ok(bytes)
}

/// Decode an 8-bit RGB PNG back into a pixel array of shape `(h, w, 3)`.
pub fn decode_png(bytes: &[u8]) -> Result<Array3<u8>, ImagingError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| ImagingError::DecodingFailure(e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    Array3::from_shape_vec((h, w, 3), rgb.into_raw())
        .map_err(|e| ImagingError::DecodingFailure(e.to_string()))
}

/// Grayscale PNG of an intensity grid, normalized to its maximum. Useful
/// for inspecting the intermediate encodings.
pub fn encode_gray_png<S: Scalar>(grid: &GrayGrid<S>) -> Result<Vec<u8>, ImagingError> {
    let max = grid.max_value();
    let (h, w) = grid.values.dim();
    let mut raw = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let v = if max > S::zero() {
                (lit::<S>(255.0) * grid.values[[r, c]] / max).round().to_u8().unwrap_or(255)
            } else {
                0
            };
            raw.push(v);
        }
    }
    let mut bytes = Vec::new();
    let encoder =
        PngEncoder::new_with_quality(&mut bytes, CompressionType::Default, FilterType::Adaptive);
    encoder
        .write_image(&raw, w as u32, h as u32, ExtendedColorType::L8)
        .map_err(|e| ImagingError::EncodingFailure(e.to_string()))?;
    Ok(bytes)
}

fn flatten_pixels(pixels: &Array3<u8>) -> Vec<u8> {
    if let Some(slice) = pixels.as_slice() {
        slice.to_vec()
    } else {
        pixels.iter().copied().collect()
    }
}
