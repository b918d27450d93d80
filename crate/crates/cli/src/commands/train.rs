//! `train`: per run, a fresh stratified split of the prepared dataset
//! with run-indexed seeds, then a full training with its log written as
//! `runs/run-<k>.csv` plus a hash-stamped config sidecar.
//!
//! Runs are independent jobs and execute in parallel. With
//! `train.augment = true` the augmentation policy is applied in memory
//! to the train split only, after splitting, so validation and test
//! stay unaugmented.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use cxrpipe::augment::expand_dataset;
use cxrpipe::dataset::{self, ManifestRecord};
use cxrpipe::imaging::{load_image, rescale_intensity, resize_bilinear, NormImage};
use cxrpipe::trainer::{self, LabeledImages, ModelConfig, TrainConfig};
use rayon::prelude::*;

use crate::config::PipelineConfig;

pub fn run(cfg: &PipelineConfig, runs: Option<usize>) -> Result<()> {
    let n_runs = runs.unwrap_or(cfg.runs);
    if n_runs == 0 {
        bail!("--runs must be >= 1");
    }
    let prepared_manifest = cfg.output_dir.join("prepared").join("manifest.csv");
    if !prepared_manifest.exists() {
        bail!(
            "prepared manifest {} not found; run `prepare` first",
            prepared_manifest.display()
        );
    }
    let records = dataset::load_manifest(&prepared_manifest)?;
    let base = prepared_manifest
        .parent()
        .expect("prepared manifest has a parent")
        .to_path_buf();

    // Images are shared read-only across runs; load them once.
    let mut images = HashMap::new();
    for record in &records {
        let gray = load_image(&dataset::resolve_in(&base, &record.image_path))
            .with_context(|| format!("loading {}", record.id))?;
        let mut norm = rescale_intensity(&gray);
        if norm.width() != cfg.model.input_side || norm.height() != cfg.model.input_side {
            norm = resize_bilinear(&norm, cfg.model.input_side, cfg.model.input_side);
        }
        images.insert(record.id.clone(), norm);
    }

    let runs_dir = cfg.output_dir.join("runs");
    std::fs::create_dir_all(&runs_dir)?;

    let outcomes: Vec<Result<String>> = (0..n_runs)
        .into_par_iter()
        .map(|k| {
            run_one(k, cfg, &records, &images, &runs_dir)
                .map_err(|e| anyhow!("run-{k}: {e:#}"))
        })
        .collect();

    let mut failed = false;
    for outcome in outcomes {
        match outcome {
            Ok(line) => println!("{line}"),
            Err(e) => {
                eprintln!("train: {e:#}");
                failed = true;
            }
        }
    }
    if failed {
        bail!("at least one training run failed");
    }
    Ok(())
}

fn run_one(
    k: usize,
    cfg: &PipelineConfig,
    records: &[ManifestRecord],
    images: &HashMap<String, NormImage>,
    runs_dir: &Path,
) -> Result<String> {
    let split_seed = cfg.split_seed.wrapping_add(k as u64);
    let model_cfg = ModelConfig {
        seed: cfg.model.seed.wrapping_add(k as u64),
        ..cfg.model.clone()
    };
    let train_cfg = TrainConfig {
        seed: cfg.train.seed.wrapping_add(k as u64),
        ..cfg.train.clone()
    };

    let split = dataset::stratified_split(records, split_seed)?;
    let labels: HashMap<&str, u8> = records.iter().map(|r| (r.id.as_str(), r.label)).collect();
    let gather = |ids: &[String]| -> Vec<(NormImage, u8)> {
        ids.iter()
            .map(|id| (images[id.as_str()].clone(), labels[id.as_str()]))
            .collect()
    };

    let mut train_pairs = gather(&split.train);
    if cfg.train_augment {
        train_pairs = expand_dataset(&train_pairs, &cfg.aug);
    }
    let (train_images, train_labels): (Vec<_>, Vec<_>) = train_pairs.into_iter().unzip();
    let train_data = LabeledImages::new(train_images, train_labels)?;
    let (val_images, val_labels): (Vec<_>, Vec<_>) = gather(&split.val).into_iter().unzip();
    let val_data = LabeledImages::new(val_images, val_labels)?;

    let run_id = format!("run-{k}");
    let (_, log) = trainer::train(&model_cfg, &train_cfg, &train_data, &val_data, &run_id)?;

    std::fs::write(runs_dir.join(format!("{run_id}.csv")), log.to_csv())?;
    let mut sidecar = String::new();
    writeln!(sidecar, "run_id = {run_id}")?;
    writeln!(sidecar, "config_hash = {}", log.config_hash)?;
    writeln!(sidecar, "split_seed = {split_seed}")?;
    writeln!(sidecar, "model.input_side = {}", model_cfg.input_side)?;
    let blocks: Vec<String> = model_cfg
        .conv_blocks
        .iter()
        .map(|(f, kk)| format!("{f}x{kk}"))
        .collect();
    writeln!(sidecar, "model.conv_blocks = {}", blocks.join(","))?;
    writeln!(sidecar, "model.dense_units = {}", model_cfg.dense_units)?;
    writeln!(sidecar, "model.dropout = {}", model_cfg.dropout_rate)?;
    writeln!(sidecar, "model.seed = {}", model_cfg.seed)?;
    writeln!(sidecar, "train.epochs = {}", train_cfg.epochs)?;
    writeln!(sidecar, "train.batch_size = {}", train_cfg.batch_size)?;
    writeln!(sidecar, "train.learning_rate = {}", train_cfg.learning_rate)?;
    writeln!(sidecar, "train.eval_every = {}", train_cfg.eval_every)?;
    writeln!(sidecar, "train.seed = {}", train_cfg.seed)?;
    writeln!(sidecar, "train.augment = {}", cfg.train_augment)?;
    std::fs::write(runs_dir.join(format!("{run_id}.config.txt")), sidecar)?;

    let last = log.points.last();
    Ok(match last {
        Some(p) => format!(
            "{run_id}: {} points, final train_acc {:.3} val_acc {:.3}",
            log.points.len(),
            p.train_acc,
            p.val_acc
        ),
        None => format!("{run_id}: 0 evaluation points (eval_every larger than run)"),
    })
}
