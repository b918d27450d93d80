//! `prepare`: per record, load the image and its mask, binarize the
//! mask, zero everything outside the lung fields, rescale to [0, 1],
//! resize, expand per the augmentation policy, and write the variants
//! plus an expanded manifest.
//!
//! Records are processed in parallel; each record either contributes
//! all of its variants or is reported as a failure. The expanded
//! manifest is only written when every record succeeds.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cxrpipe::augment::expand_image;
use cxrpipe::dataset::{self, ManifestRecord, MASK_THRESHOLD};
use cxrpipe::imaging::{
    apply_mask, binarize_mask, load_image, rescale_intensity, resize_bilinear, save_image, to_gray,
    GrayImage,
};
use rayon::prelude::*;

use crate::config::PipelineConfig;

pub fn run(cfg: &PipelineConfig) -> Result<()> {
    cfg.aug.validate()?;
    let records = dataset::load_manifest(&cfg.manifest)
        .with_context(|| format!("loading manifest {}", cfg.manifest.display()))?;
    let base = cfg
        .manifest
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();

    let prepared_dir = cfg.output_dir.join("prepared");
    let images_dir = prepared_dir.join("images");
    std::fs::create_dir_all(&images_dir)?;

    let results: Vec<Result<Vec<ManifestRecord>, String>> = records
        .par_iter()
        .map(|record| {
            process_record(record, &base, cfg)
                .map_err(|e| format!("{}: {e:#}", record.id))
                .and_then(|variants| write_variants(record, variants, &images_dir))
        })
        .collect();

    let mut expanded = Vec::new();
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok(rows) => expanded.extend(rows),
            Err(message) => failures.push(message),
        }
    }
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("prepare: {f}");
        }
        bail!("{} of {} records failed", failures.len(), records.len());
    }

    let manifest_path = prepared_dir.join("manifest.csv");
    std::fs::write(&manifest_path, dataset::manifest_to_csv(&expanded))?;
    println!(
        "prepare: {} records -> {} variants -> {}",
        records.len(),
        expanded.len(),
        manifest_path.display()
    );
    Ok(())
}

// Render every variant of one record in memory.
fn process_record(
    record: &ManifestRecord,
    base: &Path,
    cfg: &PipelineConfig,
) -> Result<Vec<(String, GrayImage)>> {
    let image = load_image(&dataset::resolve_in(base, &record.image_path))?;
    let mask_img = load_image(&dataset::resolve_in(base, &record.mask_path))?;
    let mask = binarize_mask(&mask_img, MASK_THRESHOLD)?;
    // Mask at native resolution, then resize.
    let segmented = apply_mask(&rescale_intensity(&image), &mask)?;
    let resized = resize_bilinear(&segmented, cfg.resize_side, cfg.resize_side);
    Ok(expand_image(&resized, &cfg.aug)
        .into_iter()
        .map(|(variant, tag)| (format!("{}{}", record.id, tag.suffix()), to_gray(&variant)))
        .collect())
}

fn write_variants(
    record: &ManifestRecord,
    variants: Vec<(String, GrayImage)>,
    images_dir: &Path,
) -> Result<Vec<ManifestRecord>, String> {
    let mut rows = Vec::with_capacity(variants.len());
    for (id, gray) in variants {
        let file = format!("{id}.png");
        save_image(&gray, &images_dir.join(&file)).map_err(|e| format!("{id}: {e}"))?;
        rows.push(ManifestRecord {
            id,
            image_path: PathBuf::from(format!("images/{file}")),
            // The variants are already segmented; there is no mask for
            // the expanded rows.
            mask_path: PathBuf::new(),
            label: record.label,
            gender: record.gender,
            age: record.age,
        });
    }
    Ok(rows)
}
