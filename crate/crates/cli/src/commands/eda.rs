//! `eda`: label, demographic, and area distributions of a manifest.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use cxrpipe::dataset::{self, EdaReport, Gender, Histogram};

use crate::config::PipelineConfig;

pub fn run(cfg: &PipelineConfig) -> Result<()> {
    let records = dataset::load_manifest(&cfg.manifest)
        .with_context(|| format!("loading manifest {}", cfg.manifest.display()))?;
    let base = cfg
        .manifest
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    let report = dataset::eda_report(&records, &base);

    // Nothing is written until the manifest has parsed cleanly.
    let dir = cfg.output_dir.join("eda");
    std::fs::create_dir_all(&dir)?;

    let mut labels = String::from("label,count\n");
    for (label, count) in &report.label_counts {
        writeln!(labels, "{label},{count}")?;
    }
    std::fs::write(dir.join("labels.csv"), labels)?;

    let mut gender_age = String::from("label,gender,age_decade,count\n");
    for ((label, gender, decade), count) in &report.gender_age_hist {
        writeln!(
            gender_age,
            "{label},{},{},{count}",
            gender.as_str(),
            decade_name(*decade)
        )?;
    }
    std::fs::write(dir.join("gender_age.csv"), gender_age)?;

    let mut areas = String::from("metric,bin_lo,bin_hi,count\n");
    append_hist(&mut areas, "image_area", &report.image_area_hist)?;
    append_hist(&mut areas, "mask_area", &report.mask_area_hist)?;
    std::fs::write(dir.join("areas.csv"), areas)?;

    std::fs::write(dir.join("summary.txt"), summary_text(&records.len(), &report))?;
    println!(
        "eda: {} records, {} skipped for area histograms -> {}",
        records.len(),
        report.skipped.len(),
        dir.display()
    );
    Ok(())
}

fn decade_name(decade: Option<u8>) -> String {
    match decade {
        Some(d) => format!("{}-{}", d as usize * 10, d as usize * 10 + 9),
        None => "unknown".to_string(),
    }
}

fn append_hist(out: &mut String, metric: &str, hist: &Histogram) -> Result<()> {
    for (lo, hi, count) in &hist.bins {
        writeln!(out, "{metric},{lo},{hi},{count}")?;
    }
    Ok(())
}

fn summary_text(record_count: &usize, report: &EdaReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "records: {record_count}");
    for (label, count) in &report.label_counts {
        let _ = writeln!(out, "label {label}: {count}");
    }
    let mut genders = std::collections::BTreeMap::new();
    for ((_, gender, _), count) in &report.gender_age_hist {
        *genders.entry(*gender).or_insert(0usize) += count;
    }
    for gender in [Gender::Male, Gender::Female, Gender::Unknown] {
        if let Some(count) = genders.get(&gender) {
            let _ = writeln!(out, "gender {}: {count}", gender.as_str());
        }
    }
    for (name, stats) in [
        ("image_area", &report.image_area_stats),
        ("mask_area", &report.mask_area_stats),
    ] {
        let _ = writeln!(
            out,
            "{name}: n={} mean={:.3} median={:.3} std={:.3}",
            stats.count, stats.mean, stats.median, stats.std
        );
    }
    if report.skipped.is_empty() {
        let _ = writeln!(out, "skipped: none");
    } else {
        let _ = writeln!(out, "skipped ({}): {}", report.skipped.len(), report.skipped.join(", "));
    }
    out
}
