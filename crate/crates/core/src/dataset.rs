//! Manifest ingestion, stratified dataset splitting, and exploratory
//! data analysis: label/demographic distributions, image and mask area
//! histograms, pairwise mask similarity extremes, and the average mask.
//!
//! Manifest format is a flat CSV with header
//! `id,image,mask,label,gender,age`; label is 0 or 1, gender is `M`,
//! `F`, or empty (unknown), age is an integer in 0..=120 or empty.
//! Fields must not contain commas.

use std::collections::BTreeMap;
use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::imaging::{self, binarize_mask, load_image, mask_area, resize_bilinear, Mask};

/// Threshold used when binarizing 8-bit mask files.
pub const MASK_THRESHOLD: u8 = 128;

/// Side length at which heterogeneous masks are compared.
pub const COMPARISON_SIDE: usize = 256;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed manifest row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate record id: {0}")]
    DuplicateId(String),
    #[error("too few records: {0} (need at least 10, with nonempty val and test parts)")]
    TooFewRecords(usize),
    #[error("dataset contains a single class only")]
    SingleClassDataset,
    #[error("too few usable masks: {found} (need {needed})")]
    TooFewMasks { found: usize, needed: usize },
    #[error("dimension mismatch between masks")]
    DimensionMismatch,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Imaging(#[from] imaging::ImagingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "M",
            Gender::Female => "F",
            Gender::Unknown => "unknown",
        }
    }
}

/// One labeled dataset entry with demographics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub id: String,
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    /// 1 = tuberculosis marks present, 0 = absent.
    pub label: u8,
    pub gender: Gender,
    pub age: Option<u8>,
}

const MANIFEST_HEADER: &str = "id,image,mask,label,gender,age";

/// Reads a manifest CSV. Paths are kept as written; resolve them
/// relative to the manifest's directory with [`resolve_path`].
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRecord>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_manifest(&text)
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>, DatasetError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == MANIFEST_HEADER => {}
        other => {
            return Err(DatasetError::MalformedRow {
                line: 1,
                reason: format!(
                    "expected header `{MANIFEST_HEADER}`, got `{}`",
                    other.map(|(_, l)| l).unwrap_or("")
                ),
            })
        }
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim_end_matches('\r');
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 6 {
            return Err(DatasetError::MalformedRow {
                line,
                reason: format!("expected 6 columns, got {}", fields.len()),
            });
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(DatasetError::MalformedRow {
                line,
                reason: "empty id".into(),
            });
        }
        if !seen.insert(id.to_string()) {
            return Err(DatasetError::DuplicateId(id.to_string()));
        }
        let label = match fields[3].trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(DatasetError::MalformedRow {
                    line,
                    reason: format!("label must be 0 or 1, got `{other}`"),
                })
            }
        };
        let gender = match fields[4].trim() {
            "M" => Gender::Male,
            "F" => Gender::Female,
            "" => Gender::Unknown,
            other => {
                return Err(DatasetError::MalformedRow {
                    line,
                    reason: format!("gender must be M, F, or empty, got `{other}`"),
                })
            }
        };
        let age = match fields[5].trim() {
            "" => None,
            s => match s.parse::<u8>() {
                Ok(a) if a <= 120 => Some(a),
                _ => {
                    return Err(DatasetError::MalformedRow {
                        line,
                        reason: format!("age must be an integer in 0..=120 or empty, got `{s}`"),
                    })
                }
            },
        };
        records.push(ManifestRecord {
            id: id.to_string(),
            image_path: PathBuf::from(fields[1].trim()),
            mask_path: PathBuf::from(fields[2].trim()),
            label,
            gender,
            age,
        });
    }
    Ok(records)
}

/// Serializes records back to the manifest CSV format.
pub fn manifest_to_csv(records: &[ManifestRecord]) -> String {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for r in records {
        let age = r.age.map(|a| a.to_string()).unwrap_or_default();
        let gender = match r.gender {
            Gender::Male => "M",
            Gender::Female => "F",
            Gender::Unknown => "",
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.id,
            r.image_path.display(),
            r.mask_path.display(),
            r.label,
            gender,
            age
        ));
    }
    out
}

/// Resolves a manifest-relative path against the manifest's directory.
pub fn resolve_path(manifest_path: &Path, entry: &Path) -> PathBuf {
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    resolve_in(base, entry)
}

/// Resolves a manifest entry against a base directory.
pub fn resolve_in(base: &Path, entry: &Path) -> PathBuf {
    if entry.is_absolute() {
        entry.to_path_buf()
    } else {
        base.join(entry)
    }
}

/// Disjoint train/val/test partition by record id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

/// Label-stratified 8:1:1 split: per label, ids are shuffled with the
/// seeded generator, `floor(n_label / 10)` go to val and to test, and
/// the rounding remainder goes to train.
///
/// The per-label floor rule is deterministic and keeps train largest;
/// on 336/326 labels it yields 532/65/65.
pub fn stratified_split(records: &[ManifestRecord], seed: u64) -> Result<Split, DatasetError> {
    let n = records.len();
    if n < 10 {
        return Err(DatasetError::TooFewRecords(n));
    }
    let labels: HashSet<u8> = records.iter().map(|r| r.label).collect();
    if labels.len() < 2 {
        return Err(DatasetError::SingleClassDataset);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        seed,
    };
    for label in [0u8, 1u8] {
        let mut ids: Vec<&str> = records
            .iter()
            .filter(|r| r.label == label)
            .map(|r| r.id.as_str())
            .collect();
        ids.shuffle(&mut rng);
        let part = ids.len() / 10;
        split.val.extend(ids[..part].iter().map(|s| s.to_string()));
        split
            .test
            .extend(ids[part..2 * part].iter().map(|s| s.to_string()));
        split
            .train
            .extend(ids[2 * part..].iter().map(|s| s.to_string()));
    }
    if split.val.is_empty() || split.test.is_empty() {
        return Err(DatasetError::TooFewRecords(n));
    }
    Ok(split)
}

/// Histogram over equal-width bins spanning the observed value range.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Histogram {
    /// `(lo, hi, count)` per bin; the last bin includes its upper edge.
    pub bins: Vec<(f64, f64, usize)>,
    pub total: usize,
}

impl Histogram {
    pub const BIN_COUNT: usize = 20;

    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                bins: Vec::new(),
                total: 0,
            };
        }
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if min == max {
            return Self {
                bins: vec![(min, max, values.len())],
                total: values.len(),
            };
        }
        let width = (max - min) / Self::BIN_COUNT as f64;
        let mut bins: Vec<(f64, f64, usize)> = (0..Self::BIN_COUNT)
            .map(|i| (min + i as f64 * width, min + (i + 1) as f64 * width, 0))
            .collect();
        for &v in values {
            let idx = (((v - min) / width) as usize).min(Self::BIN_COUNT - 1);
            bins[idx].2 += 1;
        }
        Self {
            bins,
            total: values.len(),
        }
    }
}

/// Mean, median, and sample standard deviation of a value set.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SummaryStats {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub count: usize,
}

impl SummaryStats {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                median: 0.0,
                std: 0.0,
                count: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        let std = if n < 2 {
            0.0
        } else {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        };
        Self {
            mean,
            median,
            std,
            count: n,
        }
    }
}

/// Decade bucket for ages (0-9, 10-19, ..., 110-119).
pub fn age_decade(age: u8) -> u8 {
    age / 10
}

#[derive(Debug, Clone, Default)]
pub struct EdaReport {
    pub label_counts: BTreeMap<u8, usize>,
    /// Counts per (label, gender, age decade); `None` decade = unknown age.
    pub gender_age_hist: BTreeMap<(u8, Gender, Option<u8>), usize>,
    pub image_area_hist: Histogram,
    pub mask_area_hist: Histogram,
    pub image_area_stats: SummaryStats,
    pub mask_area_stats: SummaryStats,
    /// Records whose image or mask could not be read, in manifest order.
    pub skipped: Vec<String>,
}

/// Builds the exploratory report. Label and demographic counts cover
/// every record; the area histograms cover records whose image and mask
/// files are readable, with failures listed in `skipped`.
///
/// `base` is the directory manifest paths resolve against.
pub fn eda_report(records: &[ManifestRecord], base: &Path) -> EdaReport {
    let mut report = EdaReport::default();
    let mut image_areas = Vec::new();
    let mut mask_areas = Vec::new();

    for record in records {
        *report.label_counts.entry(record.label).or_insert(0) += 1;
        let decade = record.age.map(age_decade);
        *report
            .gender_age_hist
            .entry((record.label, record.gender, decade))
            .or_insert(0) += 1;

        let areas = (|| -> Result<(f64, f64), DatasetError> {
            let image_path = resolve_in(base, &record.image_path);
            let (w, h) = image::image_dimensions(&image_path).map_err(|e| {
                DatasetError::Imaging(imaging::ImagingError::MalformedImage(format!(
                    "{}: {e}",
                    image_path.display()
                )))
            })?;
            let mask_path = resolve_in(base, &record.mask_path);
            let mask = binarize_mask(&load_image(&mask_path)?, MASK_THRESHOLD)?;
            Ok(((w as u64 * h as u64) as f64, mask_area(&mask) as f64))
        })();
        match areas {
            Ok((img_area, msk_area)) => {
                image_areas.push(img_area);
                mask_areas.push(msk_area);
            }
            Err(_) => report.skipped.push(record.id.clone()),
        }
    }

    report.image_area_hist = Histogram::from_values(&image_areas);
    report.mask_area_hist = Histogram::from_values(&mask_areas);
    report.image_area_stats = SummaryStats::from_values(&image_areas);
    report.mask_area_stats = SummaryStats::from_values(&mask_areas);
    report
}

/// Dice overlap 2|A∩B| / (|A|+|B|); 1.0 when both masks are empty.
pub fn mask_dice(a: &Mask, b: &Mask) -> Result<f64, DatasetError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(DatasetError::DimensionMismatch);
    }
    let mut intersection = 0usize;
    let mut total = 0usize;
    for (&ba, &bb) in a.bits().iter().zip(b.bits()) {
        intersection += (ba && bb) as usize;
        total += ba as usize + bb as usize;
    }
    if total == 0 {
        Ok(1.0)
    } else {
        Ok(2.0 * intersection as f64 / total as f64)
    }
}

/// Resizes a mask to `side`x`side` by interpolating its 0/1 field and
/// re-thresholding at 0.5.
pub fn resize_mask(mask: &Mask, side: usize) -> Mask {
    let field = resize_bilinear(&mask.to_norm(), side, side);
    let bits = field.values().iter().map(|&v| v >= 0.5).collect();
    Mask::new(side, side, bits).expect("resized buffer length matches")
}

/// A scored id pair, ids in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    pub id_a: String,
    pub id_b: String,
    pub dice: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskExtremes {
    pub most_similar: MaskPair,
    pub most_dissimilar: MaskPair,
    pub skipped: Vec<String>,
}

fn load_comparison_masks(
    records: &[ManifestRecord],
    base: &Path,
    side: usize,
) -> (Vec<(String, Mask)>, Vec<String>) {
    let mut masks = Vec::new();
    let mut skipped = Vec::new();
    for record in records {
        let path = resolve_in(base, &record.mask_path);
        match load_image(&path).and_then(|img| binarize_mask(&img, MASK_THRESHOLD)) {
            Ok(mask) => masks.push((record.id.clone(), resize_mask(&mask, side))),
            Err(_) => skipped.push(record.id.clone()),
        }
    }
    // Lexicographic id order makes the pair tie-break deterministic.
    masks.sort_by(|a, b| a.0.cmp(&b.0));
    (masks, skipped)
}

/// Exhaustive pairwise Dice over all mask pairs at the comparison
/// resolution; ties broken by lexicographically smallest id pair.
pub fn extreme_mask_pairs(
    records: &[ManifestRecord],
    base: &Path,
) -> Result<MaskExtremes, DatasetError> {
    extreme_mask_pairs_at(records, base, COMPARISON_SIDE)
}

pub fn extreme_mask_pairs_at(
    records: &[ManifestRecord],
    base: &Path,
    side: usize,
) -> Result<MaskExtremes, DatasetError> {
    let (masks, skipped) = load_comparison_masks(records, base, side);
    if masks.len() < 2 {
        return Err(DatasetError::TooFewMasks {
            found: masks.len(),
            needed: 2,
        });
    }
    let mut best: Option<MaskPair> = None;
    let mut worst: Option<MaskPair> = None;
    for i in 0..masks.len() {
        for j in (i + 1)..masks.len() {
            let dice = mask_dice(&masks[i].1, &masks[j].1)?;
            let pair = MaskPair {
                id_a: masks[i].0.clone(),
                id_b: masks[j].0.clone(),
                dice,
            };
            // Strict comparisons keep the first (lexicographically
            // smallest) pair among ties.
            if best.as_ref().is_none_or(|b| dice > b.dice) {
                best = Some(pair.clone());
            }
            if worst.as_ref().is_none_or(|w| dice < w.dice) {
                worst = Some(pair);
            }
        }
    }
    Ok(MaskExtremes {
        most_similar: best.expect("at least one pair"),
        most_dissimilar: worst.expect("at least one pair"),
        skipped,
    })
}

/// Pixelwise mean of all masks at the comparison resolution,
/// thresholded at 0.5 (>= 0.5 becomes true).
pub fn average_mask(records: &[ManifestRecord], base: &Path) -> Result<Mask, DatasetError> {
    average_mask_at(records, base, COMPARISON_SIDE)
}

pub fn average_mask_at(
    records: &[ManifestRecord],
    base: &Path,
    side: usize,
) -> Result<Mask, DatasetError> {
    let mut sum = vec![0.0f64; side * side];
    let mut count = 0usize;
    for record in records {
        let path = resolve_in(base, &record.mask_path);
        let Ok(mask) = load_image(&path).and_then(|img| binarize_mask(&img, MASK_THRESHOLD)) else {
            continue;
        };
        let field = resize_bilinear(&mask.to_norm(), side, side);
        for (acc, &v) in sum.iter_mut().zip(field.values()) {
            *acc += v as f64;
        }
        count += 1;
    }
    if count == 0 {
        return Err(DatasetError::TooFewMasks {
            found: 0,
            needed: 1,
        });
    }
    let bits = sum
        .iter()
        .map(|&s| s / count as f64 >= 0.5)
        .collect::<Vec<_>>();
    Ok(Mask::new(side, side, bits).expect("buffer length matches"))
}

/// In-memory variant of [`average_mask`] for already-loaded masks.
pub fn average_mask_of(masks: &[Mask], side: usize) -> Result<Mask, DatasetError> {
    if masks.is_empty() {
        return Err(DatasetError::TooFewMasks {
            found: 0,
            needed: 1,
        });
    }
    let mut sum = vec![0.0f64; side * side];
    for mask in masks {
        let field = resize_bilinear(&mask.to_norm(), side, side);
        for (acc, &v) in sum.iter_mut().zip(field.values()) {
            *acc += v as f64;
        }
    }
    let n = masks.len() as f64;
    let bits = sum.iter().map(|&s| s / n >= 0.5).collect::<Vec<_>>();
    Ok(Mask::new(side, side, bits).expect("buffer length matches"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::GrayImage;

    fn record(id: &str, label: u8) -> ManifestRecord {
        ManifestRecord {
            id: id.to_string(),
            image_path: PathBuf::from(format!("images/{id}.png")),
            mask_path: PathBuf::from(format!("masks/{id}.png")),
            label,
            gender: Gender::Unknown,
            age: None,
        }
    }

    fn records_with_labels(n0: usize, n1: usize) -> Vec<ManifestRecord> {
        let mut out = Vec::new();
        for i in 0..n0 {
            out.push(record(&format!("neg{i:04}"), 0));
        }
        for i in 0..n1 {
            out.push(record(&format!("pos{i:04}"), 1));
        }
        out
    }

    #[test]
    fn parse_header_only() {
        let records = parse_manifest("id,image,mask,label,gender,age\n").unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn parse_rejects_bad_label() {
        let text = "id,image,mask,label,gender,age\na,i.png,m.png,2,M,40\n";
        let err = parse_manifest(text).unwrap_err();
        assert!(matches!(err, DatasetError::MalformedRow { line: 2, .. }));
    }

    #[test]
    fn parse_rejects_wrong_column_count() {
        let text = "id,image,mask,label,gender,age\na,i.png,m.png,1,M\n";
        assert!(matches!(
            parse_manifest(text),
            Err(DatasetError::MalformedRow { .. })
        ));
    }

    #[test]
    fn parse_rejects_duplicate_id() {
        let text = "id,image,mask,label,gender,age\na,i.png,m.png,1,M,40\na,j.png,n.png,0,F,50\n";
        assert!(matches!(
            parse_manifest(text),
            Err(DatasetError::DuplicateId(_))
        ));
    }

    #[test]
    fn parse_three_rows_preserves_order_and_fields() {
        let text = "id,image,mask,label,gender,age\n\
                    a,ia.png,ma.png,1,M,40\n\
                    b,ib.png,mb.png,0,F,\n\
                    c,ic.png,mc.png,1,,7\n";
        let records = parse_manifest(text).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].id, "a");
        assert_eq!(records[0].label, 1);
        assert_eq!(records[0].gender, Gender::Male);
        assert_eq!(records[0].age, Some(40));
        assert_eq!(records[1].gender, Gender::Female);
        assert_eq!(records[1].age, None);
        assert_eq!(records[2].gender, Gender::Unknown);
        assert_eq!(records[2].age, Some(7));
        let round_trip = parse_manifest(&manifest_to_csv(&records)).unwrap();
        assert_eq!(round_trip, records);
    }

    #[test]
    fn split_matches_sh_dataset_arithmetic() {
        // 336 positive / 326 negative: floor gives 33 + 32 per part.
        let records = records_with_labels(326, 336);
        let split = stratified_split(&records, 42).unwrap();
        assert_eq!(split.val.len(), 65);
        assert_eq!(split.test.len(), 65);
        assert_eq!(split.train.len(), 532);
        let val_pos = split.val.iter().filter(|id| id.starts_with("pos")).count();
        assert_eq!(val_pos, 33);
        let test_neg = split
            .test
            .iter()
            .filter(|id| id.starts_with("neg"))
            .count();
        assert_eq!(test_neg, 32);
    }

    #[test]
    fn split_is_deterministic() {
        let records = records_with_labels(20, 20);
        let a = stratified_split(&records, 7).unwrap();
        let b = stratified_split(&records, 7).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&records, 8).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn split_rejects_degenerate_inputs() {
        assert!(matches!(
            stratified_split(&records_with_labels(4, 4), 1),
            Err(DatasetError::TooFewRecords(8))
        ));
        assert!(matches!(
            stratified_split(&records_with_labels(12, 0), 1),
            Err(DatasetError::SingleClassDataset)
        ));
        // 10 records but fewer than 10 per label: the floor rule would
        // leave val/test empty, which is rejected.
        assert!(matches!(
            stratified_split(&records_with_labels(5, 5), 1),
            Err(DatasetError::TooFewRecords(10))
        ));
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let records = records_with_labels(17, 23);
        let split = stratified_split(&records, 3).unwrap();
        let mut all: Vec<&String> = split
            .train
            .iter()
            .chain(&split.val)
            .chain(&split.test)
            .collect();
        assert_eq!(all.len(), 40);
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 40, "parts overlap");
    }

    #[test]
    fn histogram_totals_and_degenerate_range() {
        let h = Histogram::from_values(&[]);
        assert_eq!(h.total, 0);
        let h = Histogram::from_values(&[5.0, 5.0, 5.0]);
        assert_eq!(h.bins, vec![(5.0, 5.0, 3)]);
        let values: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let h = Histogram::from_values(&values);
        assert_eq!(h.bins.len(), Histogram::BIN_COUNT);
        assert_eq!(h.bins.iter().map(|b| b.2).sum::<usize>(), 100);
    }

    #[test]
    fn summary_stats_hand_computed() {
        let stats = SummaryStats::from_values(&[10.0, 10.0, 20.0, 40.0]);
        assert!((stats.mean - 20.0).abs() < 1e-12);
        assert!((stats.median - 15.0).abs() < 1e-12);
        assert!((stats.std - 200.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn eda_counts_without_files() {
        let records = records_with_labels(1, 1);
        let dir = tempfile::tempdir().unwrap();
        let report = eda_report(&records, dir.path());
        assert_eq!(report.label_counts.get(&0), Some(&1));
        assert_eq!(report.label_counts.get(&1), Some(&1));
        // No files on disk: every record is skipped for area histograms.
        assert_eq!(report.skipped.len(), 2);
        assert_eq!(report.image_area_hist.total, 0);

        let empty = eda_report(&[], dir.path());
        assert!(empty.label_counts.is_empty());
        assert_eq!(empty.mask_area_hist.total, 0);
    }

    #[test]
    fn eda_mask_area_stats_from_fixture() {
        // Four 8x8 masks with areas 10, 10, 20, 40.
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("images")).unwrap();
        std::fs::create_dir_all(dir.path().join("masks")).unwrap();
        let mut records = Vec::new();
        for (i, area) in [10usize, 10, 20, 40].iter().enumerate() {
            let id = format!("m{i}");
            let mut pixels = vec![0u8; 64];
            pixels[..*area].fill(255);
            let img = GrayImage::new(8, 8, pixels).unwrap();
            imaging::save_image(&img, &dir.path().join(format!("masks/{id}.png"))).unwrap();
            imaging::save_image(&img, &dir.path().join(format!("images/{id}.png"))).unwrap();
            records.push(record(&id, (i % 2) as u8));
        }
        let report = eda_report(&records, dir.path());
        assert!(report.skipped.is_empty());
        assert_eq!(report.mask_area_hist.total, 4);
        assert!((report.mask_area_stats.mean - 20.0).abs() < 1e-12);
        assert!((report.mask_area_stats.median - 15.0).abs() < 1e-12);
    }

    #[test]
    fn dice_identical_disjoint_and_half() {
        let a = Mask::new(2, 2, vec![true, true, false, false]).unwrap();
        let b = Mask::new(2, 2, vec![true, false, true, false]).unwrap();
        assert_eq!(mask_dice(&a, &a).unwrap(), 1.0);
        assert_eq!(mask_dice(&a, &b).unwrap(), 0.5);
        let c = Mask::new(2, 2, vec![false, false, true, true]).unwrap();
        assert_eq!(mask_dice(&a, &c).unwrap(), 0.0);
        let empty = Mask::new(2, 2, vec![false; 4]).unwrap();
        assert_eq!(mask_dice(&empty, &empty).unwrap(), 1.0);
        let other = Mask::new(1, 4, vec![true; 4]).unwrap();
        assert!(matches!(
            mask_dice(&a, &other),
            Err(DatasetError::DimensionMismatch)
        ));
    }

    fn write_mask(dir: &Path, id: &str, bits: &[bool], w: usize, h: usize) -> ManifestRecord {
        let pixels: Vec<u8> = bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        let img = GrayImage::new(w, h, pixels).unwrap();
        imaging::save_image(&img, &dir.join(format!("masks/{id}.png"))).unwrap();
        record(id, 0)
    }

    #[test]
    fn extremes_on_three_masks() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("masks")).unwrap();
        let full = vec![true; 16];
        let mut half = vec![false; 16];
        half[..8].fill(true);
        let records = vec![
            write_mask(dir.path(), "a_full", &full, 4, 4),
            write_mask(dir.path(), "b_full", &full, 4, 4),
            write_mask(dir.path(), "c_half", &half, 4, 4),
        ];
        let extremes = extreme_mask_pairs_at(&records, dir.path(), 4).unwrap();
        assert_eq!(extremes.most_similar.id_a, "a_full");
        assert_eq!(extremes.most_similar.id_b, "b_full");
        assert_eq!(extremes.most_similar.dice, 1.0);
        // full vs half: 2*8/(16+8) = 2/3
        assert!((extremes.most_dissimilar.dice - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn extremes_need_two_masks() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("masks")).unwrap();
        let records = vec![write_mask(dir.path(), "only", &[true; 4], 2, 2)];
        assert!(matches!(
            extreme_mask_pairs_at(&records, dir.path(), 2),
            Err(DatasetError::TooFewMasks { found: 1, .. })
        ));
    }

    #[test]
    fn average_of_one_is_itself_resized() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("masks")).unwrap();
        let bits = vec![true, false, false, true];
        let records = vec![write_mask(dir.path(), "solo", &bits, 2, 2)];
        let avg = average_mask_at(&records, dir.path(), 2).unwrap();
        assert_eq!(avg.bits(), &bits[..]);
    }

    #[test]
    fn average_of_complementary_masks_is_full() {
        // Mean 0.5 everywhere; the >= 0.5 rule makes every bit true.
        let a = Mask::new(2, 2, vec![true, false, true, false]).unwrap();
        let b = Mask::new(2, 2, vec![false, true, false, true]).unwrap();
        let avg = average_mask_of(&[a, b], 2).unwrap();
        assert!(avg.bits().iter().all(|&bit| bit));
    }

    #[test]
    fn average_two_of_three_wins() {
        let a = Mask::new(2, 2, vec![true, true, false, false]).unwrap();
        let b = Mask::new(2, 2, vec![true, true, false, true]).unwrap();
        let c = Mask::new(2, 2, vec![false, true, true, false]).unwrap();
        // Per-bit means: 2/3, 1, 1/3, 1/3.
        let avg = average_mask_of(&[a, b, c], 2).unwrap();
        assert_eq!(avg.bits(), &[true, true, false, false]);
    }

    #[test]
    fn age_decades() {
        assert_eq!(age_decade(0), 0);
        assert_eq!(age_decade(9), 0);
        assert_eq!(age_decade(10), 1);
        assert_eq!(age_decade(119), 11);
    }
}
