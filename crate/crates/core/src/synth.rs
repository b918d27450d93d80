//! Deterministic synthetic datasets: separable images for learnability
//! checks, low-SNR images that provoke overfitting, smooth gradients
//! for interpolation-loss measurements, and an on-disk mini dataset
//! (images + masks + manifest) for end-to-end pipeline runs.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imaging::{save_image, GrayImage, ImagingError, NormImage};
use crate::trainer::LabeledImages;

/// Uniform-random image in [0, 1].
pub fn random_image(width: usize, height: usize, seed: u64) -> NormImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..width * height)
        .map(|_| rng.gen_range(0.0f32..1.0))
        .collect();
    NormImage::new(width, height, values).expect("generated values are in range")
}

/// Smooth test image: a random low-resolution grid upsampled bilinearly.
pub fn smooth_image(side: usize, cells: usize, seed: u64) -> NormImage {
    let coarse = random_image(cells, cells, seed);
    crate::imaging::resize_bilinear(&coarse, side, side)
}

/// Linearly separable binary set: class 1 images have a bright left
/// half, class 0 a bright right half, plus mild uniform noise. Labels
/// alternate 0, 1, 0, 1, ...
pub fn separable_dataset(count: usize, side: usize, seed: u64) -> LabeledImages {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = (i % 2) as u8;
        let mut values = Vec::with_capacity(side * side);
        for y in 0..side {
            let _ = y;
            for x in 0..side {
                let left = x < side / 2;
                let bright = if label == 1 { left } else { !left };
                let base = if bright { 0.8 } else { 0.2 };
                let noise = rng.gen_range(-0.15..0.15);
                values.push((base + noise) as f32);
            }
        }
        images.push(NormImage::new(side, side, values).expect("values clamped by construction"));
        labels.push(label);
    }
    LabeledImages::new(images, labels).expect("lengths match")
}

/// Low-SNR binary set: a faint centered disc is brightened for class 1
/// and darkened for class 0, buried under strong per-pixel noise. Small
/// samples of this overfit readily.
pub fn noisy_disc_dataset(
    count: usize,
    side: usize,
    signal: f64,
    noise: f64,
    seed: u64,
) -> LabeledImages {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = (side as f64 - 1.0) / 2.0;
    let radius = side as f64 / 4.0;
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = (i % 2) as u8;
        let sign = if label == 1 { 1.0 } else { -1.0 };
        let mut values = Vec::with_capacity(side * side);
        for y in 0..side {
            for x in 0..side {
                let dx = x as f64 - center;
                let dy = y as f64 - center;
                let inside = (dx * dx + dy * dy).sqrt() <= radius;
                let pattern = if inside { sign * signal } else { 0.0 };
                let v = 0.5 + pattern + rng.gen_range(-noise..noise);
                values.push(v.clamp(0.0, 1.0) as f32);
            }
        }
        images.push(NormImage::new(side, side, values).expect("values clamped"));
        labels.push(label);
    }
    LabeledImages::new(images, labels).expect("lengths match")
}

/// Writes a small synthetic dataset under `dir`: `images/<id>.png`,
/// `masks/<id>.png`, and a `manifest.csv` with manifest-relative paths.
/// The masks are two filled lobes; images follow the separable pattern
/// so the pipeline's trainer has something to learn. Returns the
/// manifest path.
pub fn write_mini_dataset(
    dir: &Path,
    count: usize,
    side: usize,
    seed: u64,
) -> Result<PathBuf, ImagingError> {
    let data = separable_dataset(count, side, seed);
    let mask = lung_like_mask(side);
    let mut manifest = String::from("id,image,mask,label,gender,age\n");
    for (i, (img, &label)) in data.images.iter().zip(&data.labels).enumerate() {
        let id = format!("case{i:03}");
        let gray = crate::imaging::to_gray(img);
        save_image(&gray, &dir.join(format!("images/{id}.png")))?;
        save_image(&mask, &dir.join(format!("masks/{id}.png")))?;
        let gender = match i % 3 {
            0 => "M",
            1 => "F",
            _ => "",
        };
        let age = if i % 4 == 3 {
            String::new()
        } else {
            (20 + (i * 7) % 60).to_string()
        };
        manifest.push_str(&format!(
            "{id},images/{id}.png,masks/{id}.png,{label},{gender},{age}\n"
        ));
    }
    let manifest_path = dir.join("manifest.csv");
    std::fs::write(&manifest_path, manifest).map_err(|e| ImagingError::Io {
        path: manifest_path.display().to_string(),
        source: e,
    })?;
    Ok(manifest_path)
}

// Two filled discs side by side, loosely lung-shaped, white on black.
fn lung_like_mask(side: usize) -> GrayImage {
    let mut pixels = vec![0u8; side * side];
    let r = side as f64 * 0.22;
    let cy = side as f64 * 0.5;
    for (cx_frac, _) in [(0.3, ()), (0.7, ())] {
        let cx = side as f64 * cx_frac;
        for y in 0..side {
            for x in 0..side {
                let dx = x as f64 - cx;
                let dy = (y as f64 - cy) * 0.7; // elongate vertically
                if (dx * dx + dy * dy).sqrt() <= r {
                    pixels[y * side + x] = 255;
                }
            }
        }
    }
    GrayImage::new(side, side, pixels).expect("buffer length matches")
}
