//! Core raster types and the kernels applied before training: PNG
//! ingestion, mask binarization and application, intensity rescaling
//! to the unit interval, and bilinear resizing.
//!
//! All three raster types are immutable after construction and safe to
//! share across threads; every operation here is a pure function, so
//! callers may parallelize per image without coordination.
//!
//! Normalized pixel values are stored as `f32`; all intermediate
//! interpolation arithmetic runs in `f64`.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("malformed image: {0}")]
    MalformedImage(String),
    #[error("unsupported bit depth (only 8-bit grayscale or color PNG is supported)")]
    UnsupportedBitDepth,
    #[error("mask has no set bits")]
    EmptyMask,
    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn dim_mismatch(a: (usize, usize), b: (usize, usize)) -> ImagingError {
    ImagingError::DimensionMismatch {
        left_w: a.0,
        left_h: a.1,
        right_w: b.0,
        right_h: b.1,
    }
}

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidRaster(format!(
                "zero dimension: {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(ImagingError::InvalidRaster(format!(
                "pixel buffer length {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// Unit-interval grayscale raster, row-major `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormImage {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl NormImage {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidRaster(format!(
                "zero dimension: {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(ImagingError::InvalidRaster(format!(
                "value buffer length {} does not match {width}x{height}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ImagingError::InvalidRaster(format!(
                "value {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// Constant-valued image, `value` must already be in [0, 1].
    pub fn constant(width: usize, height: usize, value: f32) -> Result<Self, ImagingError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    // Kernels below construct outputs whose values are convex
    // combinations of already-validated inputs, so they skip the range
    // re-check.
    pub(crate) fn from_parts(width: usize, height: usize, values: Vec<f32>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            values,
        }
    }
}

/// Binary lung-field raster, row-major (`true` = lung field).
///
/// An all-false mask is representable (e.g. the mean of disjoint masks)
/// but is rejected at ingest by [`binarize_mask`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidRaster(format!(
                "zero dimension: {width}x{height}"
            )));
        }
        if bits.len() != width * height {
            return Err(ImagingError::InvalidRaster(format!(
                "bit buffer length {} does not match {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// The mask as a 0.0/1.0 field, for interpolated resizing.
    pub fn to_norm(&self) -> NormImage {
        let values = self
            .bits
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        NormImage::from_parts(self.width, self.height, values)
    }
}

/// Loads an 8-bit grayscale PNG. Color input is converted by unweighted
/// channel average as a safety net; 16-bit input is rejected.
pub fn load_image(path: &Path) -> Result<GrayImage, ImagingError> {
    let display = path.display().to_string();
    if !path.exists() {
        return Err(ImagingError::FileNotFound(display));
    }
    let dynamic = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => {
            ImagingError::FileNotFound(display.clone())
        }
        other => ImagingError::MalformedImage(format!("{display}: {other}")),
    })?;

    use image::DynamicImage::*;
    let (width, height, pixels) = match dynamic {
        ImageLuma8(buf) => (buf.width(), buf.height(), buf.into_raw()),
        ImageLumaA8(buf) => {
            let (w, h) = (buf.width(), buf.height());
            let px = buf.pixels().map(|p| p.0[0]).collect();
            (w, h, px)
        }
        ImageRgb8(buf) => {
            let (w, h) = (buf.width(), buf.height());
            let px = buf.pixels().map(|p| average_rgb(p.0)).collect();
            (w, h, px)
        }
        ImageRgba8(buf) => {
            let (w, h) = (buf.width(), buf.height());
            let px = buf
                .pixels()
                .map(|p| average_rgb([p.0[0], p.0[1], p.0[2]]))
                .collect();
            (w, h, px)
        }
        _ => return Err(ImagingError::UnsupportedBitDepth),
    };
    GrayImage::new(width as usize, height as usize, pixels)
}

fn average_rgb(rgb: [u8; 3]) -> u8 {
    let sum = rgb[0] as f64 + rgb[1] as f64 + rgb[2] as f64;
    (sum / 3.0).round() as u8
}

/// Writes an 8-bit grayscale PNG.
pub fn save_image(img: &GrayImage, path: &Path) -> Result<(), ImagingError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| ImagingError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
        }
    }
    image::save_buffer(
        path,
        img.pixels(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| ImagingError::MalformedImage(format!("{}: {e}", path.display())))
}

/// Quantizes a normalized image back to 8 bits (round to nearest).
pub fn to_gray(img: &NormImage) -> GrayImage {
    let pixels = img
        .values()
        .iter()
        .map(|&v| (v as f64 * 255.0).round() as u8)
        .collect();
    GrayImage {
        width: img.width(),
        height: img.height(),
        pixels,
    }
}

/// Thresholds a grayscale mask file: bit = (pixel >= threshold).
/// Rejects masks with no set bit.
pub fn binarize_mask(img: &GrayImage, threshold: u8) -> Result<Mask, ImagingError> {
    let bits: Vec<bool> = img.pixels().iter().map(|&p| p >= threshold).collect();
    if !bits.iter().any(|&b| b) {
        return Err(ImagingError::EmptyMask);
    }
    Ok(Mask {
        width: img.width(),
        height: img.height(),
        bits,
    })
}

/// Zeroes every pixel outside the mask.
pub fn apply_mask(img: &NormImage, mask: &Mask) -> Result<NormImage, ImagingError> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(dim_mismatch(
            (img.width(), img.height()),
            (mask.width(), mask.height()),
        ));
    }
    let values = img
        .values()
        .iter()
        .zip(mask.bits())
        .map(|(&v, &b)| if b { v } else { 0.0 })
        .collect();
    Ok(NormImage::from_parts(img.width(), img.height(), values))
}

/// Rescales 8-bit intensities to the unit interval: value = pixel / 255.
pub fn rescale_intensity(img: &GrayImage) -> NormImage {
    let values = img.pixels().iter().map(|&p| p as f32 / 255.0).collect();
    NormImage::from_parts(img.width(), img.height(), values)
}

/// Bilinear resize with pixel-center alignment and clamped edges:
/// `sx = (x + 0.5) * (w / out_w) - 0.5`, clamped to `[0, w - 1]`.
///
/// Resizing to identical dimensions returns a bit-exact copy.
pub fn resize_bilinear(img: &NormImage, out_w: usize, out_h: usize) -> NormImage {
    assert!(out_w >= 1 && out_h >= 1, "output dimensions must be >= 1");
    if out_w == img.width() && out_h == img.height() {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let x_scale = w as f64 / out_w as f64;
    let y_scale = h as f64 / out_h as f64;
    let mut values = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let sy = ((y as f64 + 0.5) * y_scale - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for x in 0..out_w {
            let sx = ((x as f64 + 0.5) * x_scale - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            let v00 = img.get(x0, y0) as f64;
            let v10 = img.get(x1, y0) as f64;
            let v01 = img.get(x0, y1) as f64;
            let v11 = img.get(x1, y1) as f64;
            let top = v00 + (v10 - v00) * fx;
            let bottom = v01 + (v11 - v01) * fx;
            values.push((top + (bottom - top) * fy) as f32);
        }
    }
    NormImage::from_parts(out_w, out_h, values)
}

/// Number of set bits.
pub fn mask_area(mask: &Mask) -> usize {
    mask.bits().iter().filter(|&&b| b).count()
}
