//! Chest X-ray data pipeline: lung-mask segmentation, dihedral and
//! small-angle rotation augmentation, stratified splitting, a small
//! from-scratch CNN trainer, and training-curve analytics.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`imaging`] — raster types (grayscale, normalized, mask) and the
//!   segmentation / normalization / resize kernels
//! - [`augment`] — the 8-element dihedral group (lossless) and
//!   arbitrary-angle rotation (lossy), plus dataset expansion
//! - [`dataset`] — manifest ingestion, stratified splitting, EDA, and
//!   mask-similarity analytics
//! - [`trainer`] — conv/pool/dense/sigmoid network with dropout,
//!   trained by plain SGD with exact reverse-mode gradients
//! - [`analytics`] — cross-run averaging, LOESS smoothing, loss-minimum
//!   detection, and overfitting diagnosis
//! - [`synth`] — deterministic synthetic datasets used by the test
//!   suites and the bundled end-to-end demo
//!
//! Everything is deterministic for fixed seeds: images are immutable
//! values, all operations are pure functions, and the two stateful
//! pieces (splitting and training) take explicit seeds.

pub mod analytics;
pub mod augment;
pub mod dataset;
pub mod imaging;
pub mod synth;
pub mod trainer;
