//! Property tests for the raster kernels.

use cxrpipe::imaging::{
    apply_mask, mask_area, rescale_intensity, resize_bilinear, to_gray, GrayImage, Mask, NormImage,
};
use proptest::prelude::*;

fn norm_image_strategy(max_side: usize) -> impl Strategy<Value = NormImage> {
    (1..=max_side, 1..=max_side)
        .prop_flat_map(|(w, h)| {
            proptest::collection::vec(0.0f32..=1.0, w * h)
                .prop_map(move |values| NormImage::new(w, h, values).unwrap())
        })
}

fn mask_strategy(w: usize, h: usize) -> impl Strategy<Value = Mask> {
    proptest::collection::vec(any::<bool>(), w * h)
        .prop_map(move |bits| Mask::new(w, h, bits).unwrap())
}

proptest! {
    #[test]
    fn apply_mask_is_idempotent_and_selective(
        img in norm_image_strategy(8),
        seed_bits in proptest::collection::vec(any::<bool>(), 64),
    ) {
        let bits: Vec<bool> = seed_bits[..img.width() * img.height()].to_vec();
        let mask = Mask::new(img.width(), img.height(), bits).unwrap();
        let once = apply_mask(&img, &mask).unwrap();
        let twice = apply_mask(&once, &mask).unwrap();
        prop_assert_eq!(&once, &twice);
        for y in 0..img.height() {
            for x in 0..img.width() {
                if mask.get(x, y) {
                    prop_assert_eq!(once.get(x, y), img.get(x, y));
                } else {
                    prop_assert_eq!(once.get(x, y), 0.0);
                }
            }
        }
    }

    #[test]
    fn rescale_round_trips_to_the_original_bytes(
        pixels in proptest::collection::vec(any::<u8>(), 1..64),
    ) {
        let w = pixels.len();
        let img = GrayImage::new(w, 1, pixels).unwrap();
        let recovered = to_gray(&rescale_intensity(&img));
        prop_assert_eq!(recovered, img);
    }

    #[test]
    fn resize_respects_input_bounds(
        img in norm_image_strategy(6),
        out_w in 1usize..12,
        out_h in 1usize..12,
    ) {
        let min = img.values().iter().cloned().fold(f32::INFINITY, f32::min) as f64;
        let max = img.values().iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        let out = resize_bilinear(&img, out_w, out_h);
        prop_assert_eq!((out.width(), out.height()), (out_w, out_h));
        for &v in out.values() {
            prop_assert!(v as f64 >= min - 1e-12, "{} below min {}", v, min);
            prop_assert!(v as f64 <= max + 1e-12, "{} above max {}", v, max);
        }
    }

    #[test]
    fn resize_to_same_dims_is_identity(img in norm_image_strategy(6)) {
        let out = resize_bilinear(&img, img.width(), img.height());
        prop_assert_eq!(out, img);
    }

    #[test]
    fn mask_area_equals_brute_force(mask in (1usize..8, 1usize..8).prop_flat_map(|(w, h)| mask_strategy(w, h))) {
        let mut count = 0;
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                if mask.get(x, y) {
                    count += 1;
                }
            }
        }
        prop_assert_eq!(mask_area(&mask), count);
    }
}
