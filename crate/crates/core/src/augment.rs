//! Lossless dihedral-group augmentation and lossy small-angle rotation.
//!
//! The lossless transforms are the 8 symmetries of the square (identity,
//! three quarter-turn rotations, and four reflections). They permute
//! pixels exactly, so no information is lost and the dataset grows by a
//! factor of 8. The lossy transform is rotation by an arbitrary angle
//! with bilinear resampling, which destroys some pixel information.

use thiserror::Error;

use crate::imaging::{Mask, NormImage};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid augmentation policy: {0}")]
    InvalidPolicy(String),
}

/// One of the 8 symmetries of the square.
///
/// `Rot90` is a counter-clockwise quarter turn; `Transpose` mirrors
/// across the main diagonal and `AntiTranspose` across the anti-diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum D4Element {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipLR,
    FlipUD,
    Transpose,
    AntiTranspose,
}

impl D4Element {
    /// All 8 elements in the fixed expansion order, identity first.
    pub const ALL: [D4Element; 8] = [
        D4Element::Identity,
        D4Element::Rot90,
        D4Element::Rot180,
        D4Element::Rot270,
        D4Element::FlipLR,
        D4Element::FlipUD,
        D4Element::Transpose,
        D4Element::AntiTranspose,
    ];

    /// Lowercase name used in provenance suffixes.
    pub fn name(self) -> &'static str {
        match self {
            D4Element::Identity => "identity",
            D4Element::Rot90 => "rot90",
            D4Element::Rot180 => "rot180",
            D4Element::Rot270 => "rot270",
            D4Element::FlipLR => "fliplr",
            D4Element::FlipUD => "flipud",
            D4Element::Transpose => "transpose",
            D4Element::AntiTranspose => "antitranspose",
        }
    }

    // Internal factorization e = rot^k . flip^f (flip applied first),
    // with rot the counter-clockwise quarter turn and flip = FlipLR.
    fn decompose(self) -> (u8, bool) {
        match self {
            D4Element::Identity => (0, false),
            D4Element::Rot90 => (1, false),
            D4Element::Rot180 => (2, false),
            D4Element::Rot270 => (3, false),
            D4Element::FlipLR => (0, true),
            D4Element::FlipUD => (2, true),
            D4Element::Transpose => (1, true),
            D4Element::AntiTranspose => (3, true),
        }
    }

    fn compose_parts(rot: u8, flip: bool) -> D4Element {
        match (rot % 4, flip) {
            (0, false) => D4Element::Identity,
            (1, false) => D4Element::Rot90,
            (2, false) => D4Element::Rot180,
            (3, false) => D4Element::Rot270,
            (0, true) => D4Element::FlipLR,
            (2, true) => D4Element::FlipUD,
            (1, true) => D4Element::Transpose,
            (3, true) => D4Element::AntiTranspose,
            _ => unreachable!(),
        }
    }

    /// The element undoing this one: `d4_apply(d4_apply(img, e), e.inverse())`
    /// is the identity. Reflections are their own inverses.
    pub fn inverse(self) -> D4Element {
        let (rot, flip) = self.decompose();
        if flip {
            self
        } else {
            Self::compose_parts((4 - rot) % 4, false)
        }
    }

    /// Output dimensions for an input of `w`x`h`.
    pub fn output_dims(self, w: usize, h: usize) -> (usize, usize) {
        match self {
            D4Element::Identity | D4Element::Rot180 | D4Element::FlipLR | D4Element::FlipUD => {
                (w, h)
            }
            _ => (h, w),
        }
    }

    // Source pixel coordinates for output position (x, y).
    #[inline]
    fn source(self, x: usize, y: usize, in_w: usize, in_h: usize) -> (usize, usize) {
        match self {
            D4Element::Identity => (x, y),
            D4Element::Rot90 => (in_w - 1 - y, x),
            D4Element::Rot180 => (in_w - 1 - x, in_h - 1 - y),
            D4Element::Rot270 => (y, in_h - 1 - x),
            D4Element::FlipLR => (in_w - 1 - x, y),
            D4Element::FlipUD => (x, in_h - 1 - y),
            D4Element::Transpose => (y, x),
            D4Element::AntiTranspose => (in_w - 1 - y, in_h - 1 - x),
        }
    }
}

impl std::fmt::Display for D4Element {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn permute<T: Copy>(data: &[T], w: usize, h: usize, e: D4Element) -> (usize, usize, Vec<T>) {
    let (out_w, out_h) = e.output_dims(w, h);
    let mut out = Vec::with_capacity(data.len());
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = e.source(x, y, w, h);
            out.push(data[sy * w + sx]);
        }
    }
    (out_w, out_h, out)
}

/// Applies a dihedral symmetry as an exact pixel permutation.
pub fn d4_apply(img: &NormImage, e: D4Element) -> NormImage {
    if e == D4Element::Identity {
        return img.clone();
    }
    let (w, h, values) = permute(img.values(), img.width(), img.height(), e);
    NormImage::from_parts(w, h, values)
}

/// The same permutation lifted to binary masks.
pub fn d4_apply_mask(mask: &Mask, e: D4Element) -> Mask {
    let (w, h, bits) = permute(mask.bits(), mask.width(), mask.height(), e);
    Mask::new(w, h, bits).expect("permutation preserves buffer length")
}

/// Group law: `d4_apply(img, d4_compose(e1, e2))` equals applying `e1`
/// first and `e2` second.
pub fn d4_compose(e1: D4Element, e2: D4Element) -> D4Element {
    let (k1, f1) = e1.decompose();
    let (k2, f2) = e2.decompose();
    // e2 . e1 = rot^k2 flip^f2 rot^k1 flip^f1; flip rot^k = rot^(-k) flip.
    let k1_signed = if f2 { (4 - k1) % 4 } else { k1 };
    D4Element::compose_parts((k2 + k1_signed) % 4, f1 ^ f2)
}

/// The full 8-image orbit of `img`, in [`D4Element::ALL`] order.
pub fn d4_expand(img: &NormImage) -> Vec<NormImage> {
    D4Element::ALL.iter().map(|&e| d4_apply(img, e)).collect()
}

/// Rotation about the image center by `angle_deg` counter-clockwise,
/// bilinear sampling, zero fill outside the source, output dimensions
/// equal input dimensions. A zero angle returns a bit-exact copy.
pub fn rotate_lossy(img: &NormImage, angle_deg: f64) -> NormImage {
    assert!(angle_deg.is_finite(), "rotation angle must be finite");
    if angle_deg == 0.0 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let theta = angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        let dy = y as f64 - cy;
        for x in 0..w {
            let dx = x as f64 - cx;
            // Destination scan: rotate the output position back onto the
            // source grid. Screen-CCW in a y-down frame corresponds to the
            // mathematically positive matrix here; the 90-degree case is
            // pinned to d4_apply(Rot90) by test.
            let sx = cx + cos * dx - sin * dy;
            let sy = cy + sin * dx + cos * dy;
            values.push(sample_bilinear_zero(img, sx, sy));
        }
    }
    NormImage::from_parts(w, h, values)
}

// Bilinear sample with zero fill for out-of-range neighbors.
fn sample_bilinear_zero(img: &NormImage, sx: f64, sy: f64) -> f32 {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let x0 = sx.floor() as isize;
    let y0 = sy.floor() as isize;
    let fx = sx - x0 as f64;
    let fy = sy - y0 as f64;
    let mut acc = 0.0f64;
    for (dx, dy, wgt) in [
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (1, 0, fx * (1.0 - fy)),
        (0, 1, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ] {
        let (px, py) = (x0 + dx, y0 + dy);
        if px >= 0 && px < w && py >= 0 && py < h {
            acc += wgt * img.get(px as usize, py as usize) as f64;
        }
    }
    acc.clamp(0.0, 1.0) as f32
}

/// Expansion policy: lossless dihedral orbit, deterministic lossy
/// rotation angles, and whether the fully untransformed variant is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct AugPolicy {
    pub lossless: bool,
    pub lossy_angles: Vec<f64>,
    pub include_original: bool,
}

impl Default for AugPolicy {
    fn default() -> Self {
        Self {
            lossless: true,
            lossy_angles: vec![5.0, -5.0],
            include_original: true,
        }
    }
}

impl AugPolicy {
    /// No augmentation at all: pass records through unchanged.
    pub fn none() -> Self {
        Self {
            lossless: false,
            lossy_angles: Vec::new(),
            include_original: true,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        for &a in &self.lossy_angles {
            if !a.is_finite() || a == 0.0 || a.abs() >= 45.0 {
                return Err(AugmentError::InvalidPolicy(format!(
                    "lossy angle {a} must be finite, nonzero, and in (-45, 45)"
                )));
            }
        }
        Ok(())
    }

    /// Output records per input record. The base factor is
    /// `(8 if lossless else 1) * (1 + lossy_angles.len())`; dropping the
    /// original removes exactly one variant (the untransformed one).
    pub fn factor(&self) -> usize {
        let base = if self.lossless { 8 } else { 1 };
        let full = base * (1 + self.lossy_angles.len());
        if self.include_original {
            full
        } else {
            full - 1
        }
    }
}

/// Provenance of one expanded variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantTag {
    /// Dihedral element, `None` when lossless expansion is off.
    pub d4: Option<D4Element>,
    /// Lossy rotation angle in degrees, `None` for the unrotated variant.
    pub angle: Option<f64>,
}

impl VariantTag {
    /// `true` for the variant identical to the input image.
    pub fn is_original(&self) -> bool {
        matches!(self.d4, None | Some(D4Element::Identity)) && self.angle.is_none()
    }

    /// File-name suffix: `_d4-<element>` then `_rot<+/-deg>`.
    pub fn suffix(&self) -> String {
        let mut s = String::new();
        if let Some(e) = self.d4 {
            s.push_str("_d4-");
            s.push_str(e.name());
        }
        if let Some(a) = self.angle {
            s.push_str(&format!("_rot{a:+}"));
        }
        s
    }
}

/// All variants of one image under `policy`, tagged with provenance.
/// Order: dihedral elements in [`D4Element::ALL`] order (outer), then
/// the unrotated variant followed by `lossy_angles` (inner).
pub fn expand_image(img: &NormImage, policy: &AugPolicy) -> Vec<(NormImage, VariantTag)> {
    let d4_variants: Vec<(Option<D4Element>, NormImage)> = if policy.lossless {
        D4Element::ALL
            .iter()
            .map(|&e| (Some(e), d4_apply(img, e)))
            .collect()
    } else {
        vec![(None, img.clone())]
    };

    let mut out = Vec::with_capacity(policy.factor());
    for (e, base) in d4_variants {
        for angle in std::iter::once(None).chain(policy.lossy_angles.iter().copied().map(Some)) {
            let tag = VariantTag { d4: e, angle };
            if !policy.include_original && tag.is_original() {
                continue;
            }
            let image = match angle {
                None => base.clone(),
                Some(a) => rotate_lossy(&base, a),
            };
            out.push((image, tag));
        }
    }
    out
}

/// Expands every record, copying its label onto each variant.
/// Output order: input order, then transform order.
pub fn expand_dataset<L: Clone>(records: &[(NormImage, L)], policy: &AugPolicy) -> Vec<(NormImage, L)> {
    records
        .iter()
        .flat_map(|(img, label)| {
            expand_image(img, policy)
                .into_iter()
                .map(move |(variant, _)| (variant, label.clone()))
        })
        .collect()
}
