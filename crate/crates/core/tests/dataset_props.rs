//! Split, Dice, and mask-analytics properties, including the
//! brute-force pairwise oracle for the similarity extremes.

use std::path::PathBuf;

use cxrpipe::dataset::{
    extreme_mask_pairs_at, mask_dice, resize_mask, stratified_split, Gender, ManifestRecord,
};
use cxrpipe::imaging::{save_image, GrayImage, Mask};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn records_with_labels(n0: usize, n1: usize) -> Vec<ManifestRecord> {
    let mut out = Vec::new();
    for i in 0..n0 {
        out.push(ManifestRecord {
            id: format!("neg{i:04}"),
            image_path: PathBuf::from("img.png"),
            mask_path: PathBuf::from("mask.png"),
            label: 0,
            gender: Gender::Unknown,
            age: None,
        });
    }
    for i in 0..n1 {
        out.push(ManifestRecord {
            id: format!("pos{i:04}"),
            image_path: PathBuf::from("img.png"),
            mask_path: PathBuf::from("mask.png"),
            label: 1,
            gender: Gender::Unknown,
            age: None,
        });
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_parts_are_disjoint_and_exhaustive(
        n0 in 10usize..80,
        n1 in 10usize..80,
        seed in any::<u64>(),
    ) {
        let records = records_with_labels(n0, n1);
        let split = stratified_split(&records, seed).unwrap();
        let mut all: Vec<&String> = split.train.iter().chain(&split.val).chain(&split.test).collect();
        prop_assert_eq!(all.len(), n0 + n1);
        all.sort();
        all.dedup();
        prop_assert_eq!(all.len(), n0 + n1, "parts overlap");

        // Per-label counts in val and test are exactly floor(n/10).
        for (prefix, n) in [("neg", n0), ("pos", n1)] {
            let expected = n / 10;
            for part in [&split.val, &split.test] {
                let count = part.iter().filter(|id| id.starts_with(prefix)).count();
                prop_assert_eq!(count, expected, "{} in val/test", prefix);
            }
        }
    }

    #[test]
    fn split_is_seed_deterministic(n0 in 10usize..40, n1 in 10usize..40, seed in any::<u64>()) {
        let records = records_with_labels(n0, n1);
        let a = stratified_split(&records, seed).unwrap();
        let b = stratified_split(&records, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn dice_is_symmetric_reflexive_and_bounded(
        bits_a in proptest::collection::vec(any::<bool>(), 36),
        bits_b in proptest::collection::vec(any::<bool>(), 36),
    ) {
        let a = Mask::new(6, 6, bits_a).unwrap();
        let b = Mask::new(6, 6, bits_b).unwrap();
        let ab = mask_dice(&a, &b).unwrap();
        let ba = mask_dice(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(mask_dice(&a, &a).unwrap(), 1.0);
    }
}

#[test]
fn different_seeds_shuffle_membership() {
    let records = records_with_labels(20, 20);
    let a = stratified_split(&records, 1).unwrap();
    let b = stratified_split(&records, 2).unwrap();
    assert_ne!(a.train, b.train);
}

#[test]
fn extremes_agree_with_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("masks")).unwrap();
    let side = 12usize;
    let n = 18usize;

    let mut records = Vec::new();
    let mut masks = Vec::new();
    for i in 0..n {
        let id = format!("m{i:02}");
        // Random rectangle-ish blobs; retry until nonempty.
        let mut bits = vec![false; side * side];
        let x0 = rng.gen_range(0..side - 2);
        let y0 = rng.gen_range(0..side - 2);
        let x1 = rng.gen_range(x0 + 1..side);
        let y1 = rng.gen_range(y0 + 1..side);
        for y in y0..=y1 {
            for x in x0..=x1 {
                bits[y * side + x] = true;
            }
        }
        let pixels: Vec<u8> = bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        save_image(
            &GrayImage::new(side, side, pixels).unwrap(),
            &dir.path().join(format!("masks/{id}.png")),
        )
        .unwrap();
        masks.push((id.clone(), Mask::new(side, side, bits).unwrap()));
        records.push(ManifestRecord {
            id,
            image_path: PathBuf::from("none.png"),
            mask_path: PathBuf::from(format!("masks/m{i:02}.png")),
            label: (i % 2) as u8,
            gender: Gender::Unknown,
            age: None,
        });
    }

    let comparison_side = 8;
    let result = extreme_mask_pairs_at(&records, dir.path(), comparison_side).unwrap();

    // Independent double loop over the same comparison-resolution masks.
    let resized: Vec<(String, Mask)> = masks
        .iter()
        .map(|(id, m)| (id.clone(), resize_mask(m, comparison_side)))
        .collect();
    let mut best = (String::new(), String::new(), f64::NEG_INFINITY);
    let mut worst = (String::new(), String::new(), f64::INFINITY);
    for i in 0..resized.len() {
        for j in 0..resized.len() {
            if i == j {
                continue;
            }
            let (a, b) = (&resized[i], &resized[j]);
            let (first, second) = if a.0 < b.0 { (a, b) } else { (b, a) };
            let d = mask_dice(&first.1, &second.1).unwrap();
            let key = (first.0.clone(), second.0.clone());
            if d > best.2 || (d == best.2 && (key.clone()) < (best.0.clone(), best.1.clone())) {
                best = (key.0.clone(), key.1.clone(), d);
            }
            if d < worst.2 || (d == worst.2 && key < (worst.0.clone(), worst.1.clone())) {
                worst = (key.0, key.1, d);
            }
        }
    }

    assert_eq!(result.most_similar.dice, best.2);
    assert_eq!((result.most_similar.id_a, result.most_similar.id_b), (best.0, best.1));
    assert_eq!(result.most_dissimilar.dice, worst.2);
    assert_eq!(
        (result.most_dissimilar.id_a, result.most_dissimilar.id_b),
        (worst.0, worst.1)
    );
}
