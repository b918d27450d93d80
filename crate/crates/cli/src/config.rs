//! Pipeline configuration: a flat `key = value` file with dotted
//! section keys, `#` comments, and blank lines. CLI flags override file
//! values; anything unset falls back to the defaults below.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cxrpipe::analytics::{LoessConfig, OverfitConfig};
use cxrpipe::augment::AugPolicy;
use cxrpipe::trainer::{ModelConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    /// Side length images are resized to during `prepare`.
    pub resize_side: usize,
    pub aug: AugPolicy,
    pub split_seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Apply the augmentation policy to the training split in memory
    /// during `train` (leakage-free workflow; see README).
    pub train_augment: bool,
    /// Default number of runs for `train`.
    pub runs: usize,
    pub loess: LoessConfig,
    pub overfit: OverfitConfig,
    /// True when the config file set model.input_side explicitly.
    input_side_pinned: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("manifest.csv"),
            output_dir: PathBuf::from("out"),
            resize_side: 128,
            aug: AugPolicy::default(),
            split_seed: 42,
            model: ModelConfig {
                input_side: 128,
                ..ModelConfig::default()
            },
            train: TrainConfig::default(),
            train_augment: false,
            runs: 1,
            loess: LoessConfig::default(),
            overfit: OverfitConfig::default(),
            input_side_pinned: false,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {}: expected `key = value`", idx + 1);
            };
            let key = key.trim();
            let value = value.trim();
            if seen.insert(key.to_string(), idx + 1).is_some() {
                bail!("config line {}: duplicate key `{key}`", idx + 1);
            }
            cfg.apply(key, value)
                .with_context(|| format!("config line {}", idx + 1))?;
        }
        cfg.finish();
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "manifest" => self.manifest = PathBuf::from(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "resize_side" => self.resize_side = parse_num(key, value)?,
            "aug.lossless" => self.aug.lossless = parse_bool(key, value)?,
            "aug.lossy_angles" => self.aug.lossy_angles = parse_angles(value)?,
            "aug.include_original" => self.aug.include_original = parse_bool(key, value)?,
            "split.seed" => self.split_seed = parse_num(key, value)?,
            "model.input_side" => {
                self.model.input_side = parse_num(key, value)?;
                self.input_side_pinned = true;
            }
            "model.conv_blocks" => self.model.conv_blocks = parse_blocks(value)?,
            "model.dense_units" => self.model.dense_units = parse_num(key, value)?,
            "model.dropout" => self.model.dropout_rate = parse_num(key, value)?,
            "model.seed" => self.model.seed = parse_num(key, value)?,
            "train.epochs" => self.train.epochs = parse_num(key, value)?,
            "train.batch_size" => self.train.batch_size = parse_num(key, value)?,
            "train.learning_rate" => self.train.learning_rate = parse_num(key, value)?,
            "train.eval_every" => self.train.eval_every = parse_num(key, value)?,
            "train.seed" => self.train.seed = parse_num(key, value)?,
            "train.augment" => self.train_augment = parse_bool(key, value)?,
            "train.runs" => self.runs = parse_num(key, value)?,
            "loess.span" => self.loess.span = parse_num(key, value)?,
            "loess.degree" => self.loess.degree = parse_num(key, value)?,
            "overfit.min_rise" => self.overfit.min_rise = parse_num(key, value)?,
            "overfit.gap_slope_min" => self.overfit.gap_slope_min = parse_num(key, value)?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    // Unless pinned, the model trains at the prepared resolution.
    fn finish(&mut self) {
        if !self.input_side_pinned {
            self.model.input_side = self.resize_side;
        }
    }

    /// Applies the global CLI flag overrides.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        out: Option<&Path>,
        full_scale: bool,
    ) -> Result<()> {
        if let Some(seed) = seed {
            self.split_seed = seed;
            self.model.seed = seed;
            self.train.seed = seed;
        }
        if let Some(out) = out {
            self.output_dir = out.to_path_buf();
        }
        if full_scale {
            self.resize_side = 2048;
            if !self.input_side_pinned {
                self.model.input_side = 2048;
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.resize_side < 8 {
            bail!("resize_side must be >= 8, got {}", self.resize_side);
        }
        if self.runs == 0 {
            bail!("train.runs must be >= 1");
        }
        self.aug.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if !(self.loess.span > 0.0 && self.loess.span <= 1.0) {
            bail!("loess.span must be in (0, 1], got {}", self.loess.span);
        }
        if !(1..=2).contains(&self.loess.degree) {
            bail!("loess.degree must be 1 or 2, got {}", self.loess.degree);
        }
        Ok(())
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        other => bail!("{key}: expected true/false, got `{other}`"),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow::anyhow!("{key}: bad value `{value}`: {e}"))
}

fn parse_angles(value: &str) -> Result<Vec<f64>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| anyhow::anyhow!("aug.lossy_angles: bad angle `{s}`: {e}"))
        })
        .collect()
}

// "8x3,16x3,32x3" -> [(8, 3), (16, 3), (32, 3)]; empty string = no blocks.
fn parse_blocks(value: &str) -> Result<Vec<(usize, usize)>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|s| {
            let s = s.trim();
            let Some((filters, kernel)) = s.split_once('x') else {
                bail!("model.conv_blocks: expected `<filters>x<kernel>`, got `{s}`");
            };
            Ok((
                filters.parse().context("bad filter count")?,
                kernel.parse().context("bad kernel size")?,
            ))
        })
        .collect()
}
