//! Desk-scale convolutional network with dropout, trained by mini-batch
//! SGD with exact reverse-mode gradients.
//!
//! Architecture: per conv block, conv(kxk, stride 1, zero pad same) ->
//! ReLU -> maxpool(2x2); then flatten -> dense -> ReLU -> inverted
//! dropout -> dense(1) -> sigmoid. Parameters are 64-bit; everything is
//! stored and computed with explicit loops so the gradient path can be
//! checked against finite differences.
//!
//! A training run is single-threaded and bit-deterministic for fixed
//! seeds. One ChaCha stream drives the run: the epoch shuffle first,
//! then one dropout mask per step.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::imaging::NormImage;

const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: {preds} predictions vs {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("non-finite gradient at step {step}")]
    NonFiniteGradient { step: u64 },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("malformed run log: {0}")]
    MalformedLog(String),
}

/// Network shape and initialization seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_side: usize,
    /// (filters, kernel_size) per block; kernels must be odd.
    pub conv_blocks: Vec<(usize, usize)>,
    pub dense_units: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_side: 128,
            conv_blocks: vec![(8, 3), (16, 3), (32, 3)],
            dense_units: 64,
            dropout_rate: 0.5,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        if self.input_side == 0 {
            return Err(TrainerError::InvalidConfig("input_side must be >= 1".into()));
        }
        let divisor = 1usize << self.conv_blocks.len();
        if !self.input_side.is_multiple_of(divisor) {
            return Err(TrainerError::InvalidConfig(format!(
                "input_side {} not divisible by 2^{} = {}",
                self.input_side,
                self.conv_blocks.len(),
                divisor
            )));
        }
        for &(filters, kernel) in &self.conv_blocks {
            if filters == 0 {
                return Err(TrainerError::InvalidConfig("conv block with 0 filters".into()));
            }
            if kernel == 0 || kernel % 2 == 0 {
                return Err(TrainerError::InvalidConfig(format!(
                    "kernel size {kernel} must be odd"
                )));
            }
        }
        if self.dense_units == 0 {
            return Err(TrainerError::InvalidConfig("dense_units must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(TrainerError::InvalidConfig(format!(
                "dropout_rate {} must be in [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    fn canonical_string(&self) -> String {
        let blocks: Vec<String> = self
            .conv_blocks
            .iter()
            .map(|(f, k)| format!("{f}x{k}"))
            .collect();
        format!(
            "input_side={};conv_blocks={};dense_units={};dropout={};model_seed={}",
            self.input_side,
            blocks.join(","),
            self.dense_units,
            self.dropout_rate,
            self.seed
        )
    }
}

/// Optimization schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Steps between train/validation evaluations.
    pub eval_every: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 16,
            learning_rate: 0.01,
            eval_every: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(TrainerError::InvalidConfig(
                "epochs, batch_size, and eval_every must be >= 1".into(),
            ));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(TrainerError::InvalidConfig("learning_rate must be > 0".into()));
        }
        Ok(())
    }

    fn canonical_string(&self) -> String {
        format!(
            "epochs={};batch={};lr={};eval_every={};train_seed={}",
            self.epochs, self.batch_size, self.learning_rate, self.eval_every, self.seed
        )
    }
}

/// Short stable digest of the model + training configuration.
pub fn config_hash(model_cfg: &ModelConfig, train_cfg: &TrainConfig) -> String {
    let canonical = format!(
        "{};{}",
        model_cfg.canonical_string(),
        train_cfg.canonical_string()
    );
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

struct ConvLayer {
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    /// [out_ch][in_ch][k][k], row-major.
    weights: Vec<f64>,
    biases: Vec<f64>,
}

/// The parameter set; construct with [`build_model`].
pub struct Model {
    cfg: ModelConfig,
    conv: Vec<ConvLayer>,
    /// [dense_units][flat_len]
    dense1_w: Vec<f64>,
    dense1_b: Vec<f64>,
    /// [dense_units]
    dense2_w: Vec<f64>,
    dense2_b: f64,
    flat_len: usize,
}

/// Per-parameter gradients in the same layout as [`Model`].
pub struct Gradients {
    conv_w: Vec<Vec<f64>>,
    conv_b: Vec<Vec<f64>>,
    dense1_w: Vec<f64>,
    dense1_b: Vec<f64>,
    dense2_w: Vec<f64>,
    dense2_b: f64,
}

/// Per-step dropout mask over the hidden dense units; entries are 0 or
/// the inverted-dropout scale 1/(1-rate).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    scales: Vec<f64>,
}

/// Initializes a model with fan-in-scaled uniform weights
/// (+-sqrt(6/fan_in)) and zero biases, deterministically per seed.
pub fn build_model(cfg: &ModelConfig) -> Result<Model, TrainerError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw = |fan_in: usize, count: usize| -> Vec<f64> {
        let limit = (6.0 / fan_in as f64).sqrt();
        (0..count).map(|_| rng.gen_range(-limit..limit)).collect()
    };

    let mut conv = Vec::new();
    let mut in_ch = 1usize;
    for &(filters, kernel) in &cfg.conv_blocks {
        let fan_in = in_ch * kernel * kernel;
        conv.push(ConvLayer {
            in_ch,
            out_ch: filters,
            kernel,
            weights: draw(fan_in, filters * fan_in),
            biases: vec![0.0; filters],
        });
        in_ch = filters;
    }
    let feature_side = cfg.input_side >> cfg.conv_blocks.len();
    let flat_len = in_ch * feature_side * feature_side;
    let dense1_w = draw(flat_len, cfg.dense_units * flat_len);
    let dense1_b = vec![0.0; cfg.dense_units];
    let dense2_w = draw(cfg.dense_units, cfg.dense_units);
    let dense2_b = 0.0;

    Ok(Model {
        cfg: cfg.clone(),
        conv,
        dense1_w,
        dense1_b,
        dense2_w,
        dense2_b,
        flat_len,
    })
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean binary cross-entropy with predictions clamped to
/// [1e-12, 1 - 1e-12].
pub fn bce_loss(preds: &[f64], labels: &[u8]) -> Result<f64, TrainerError> {
    if preds.len() != labels.len() {
        return Err(TrainerError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(TrainerError::EmptyDataset);
    }
    let sum: f64 = preds
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(sum / preds.len() as f64)
}

/// Fraction of items with (pred >= 0.5) == label; the tie at exactly
/// 0.5 counts as class 1.
pub fn accuracy(preds: &[f64], labels: &[u8]) -> f64 {
    let correct = preds
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= 0.5) as u8 == y)
        .count();
    correct as f64 / preds.len() as f64
}

// Scratch space for one image's forward pass, reused across a batch.
struct Trace {
    input: Vec<f64>,
    /// Post-ReLU conv output per block, full resolution.
    conv_out: Vec<Vec<f64>>,
    /// Pooled output per block (input to the next stage).
    pooled: Vec<Vec<f64>>,
    /// Flat index into the block's conv_out chosen by each pool cell.
    argmax: Vec<Vec<u32>>,
    /// Post-ReLU hidden dense activations, before dropout.
    hidden: Vec<f64>,
    /// Hidden activations after the dropout mask.
    dropped: Vec<f64>,
    logit: f64,
    prob: f64,
}

impl Trace {
    fn new(model: &Model) -> Trace {
        let mut side = model.cfg.input_side;
        let mut conv_out = Vec::new();
        let mut pooled = Vec::new();
        let mut argmax = Vec::new();
        for layer in &model.conv {
            conv_out.push(vec![0.0; layer.out_ch * side * side]);
            pooled.push(vec![0.0; layer.out_ch * (side / 2) * (side / 2)]);
            argmax.push(vec![0; layer.out_ch * (side / 2) * (side / 2)]);
            side /= 2;
        }
        Trace {
            input: vec![0.0; model.cfg.input_side * model.cfg.input_side],
            conv_out,
            pooled,
            argmax,
            hidden: vec![0.0; model.cfg.dense_units],
            dropped: vec![0.0; model.cfg.dense_units],
            logit: 0.0,
            prob: 0.0,
        }
    }
}

fn conv_forward(input: &[f64], side: usize, layer: &ConvLayer, out: &mut [f64]) {
    let k = layer.kernel;
    let pad = (k / 2) as isize;
    let plane = side * side;
    for oc in 0..layer.out_ch {
        out[oc * plane..(oc + 1) * plane].fill(layer.biases[oc]);
    }
    for oc in 0..layer.out_ch {
        for ic in 0..layer.in_ch {
            let in_plane = &input[ic * plane..(ic + 1) * plane];
            for ky in 0..k {
                let dy = ky as isize - pad;
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let w = layer.weights[((oc * layer.in_ch + ic) * k + ky) * k + kx];
                    let y0 = (-dy).max(0) as usize;
                    let y1 = (side as isize - dy.max(0)) as usize;
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (side as isize - dx.max(0)) as usize;
                    for y in y0..y1 {
                        let iy = (y as isize + dy) as usize;
                        let in_start = (iy * side) as isize + dx;
                        let in_row = &in_plane[(in_start + x0 as isize) as usize
                            ..(in_start + x1 as isize) as usize];
                        let out_row = &mut out[oc * plane + y * side + x0..oc * plane + y * side + x1];
                        for (o, &i) in out_row.iter_mut().zip(in_row) {
                            *o += w * i;
                        }
                    }
                }
            }
        }
    }
}

fn relu_inplace(data: &mut [f64]) {
    for v in data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn maxpool_forward(act: &[f64], channels: usize, side: usize, out: &mut [f64], argmax: &mut [u32]) {
    let half = side / 2;
    let plane = side * side;
    for c in 0..channels {
        for py in 0..half {
            for px in 0..half {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0u32;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = c * plane + (py * 2 + dy) * side + px * 2 + dx;
                        if act[idx] > best {
                            best = act[idx];
                            best_idx = idx as u32;
                        }
                    }
                }
                out[c * half * half + py * half + px] = best;
                argmax[c * half * half + py * half + px] = best_idx;
            }
        }
    }
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn param_count(&self) -> usize {
        let conv: usize = self
            .conv
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum();
        conv + self.dense1_w.len() + self.dense1_b.len() + self.dense2_w.len() + 1
    }

    /// Samples a per-step dropout mask. A rate of 0 yields the identity
    /// mask without consuming randomness.
    pub fn sample_dropout_mask(&self, rng: &mut ChaCha8Rng) -> DropoutMask {
        let rate = self.cfg.dropout_rate;
        if rate == 0.0 {
            return DropoutMask {
                scales: vec![1.0; self.cfg.dense_units],
            };
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let scales = (0..self.cfg.dense_units)
            .map(|_| {
                if rng.gen::<f64>() < rate {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        DropoutMask { scales }
    }

    fn check_image(&self, img: &NormImage) -> Result<(), TrainerError> {
        let side = self.cfg.input_side;
        if img.width() != side || img.height() != side {
            return Err(TrainerError::ShapeMismatch(format!(
                "image is {}x{}, model expects {side}x{side}",
                img.width(),
                img.height()
            )));
        }
        Ok(())
    }

    // Full forward pass for one image, recording everything backward needs.
    fn forward_one(&self, img: &NormImage, mask: Option<&DropoutMask>, trace: &mut Trace) {
        for (dst, &src) in trace.input.iter_mut().zip(img.values()) {
            *dst = src as f64;
        }
        let mut side = self.cfg.input_side;
        for (b, layer) in self.conv.iter().enumerate() {
            // Split borrows: the input of block b is trace.input or the
            // pooled output of block b-1.
            let (before, after) = trace.pooled.split_at_mut(b);
            let input: &[f64] = if b == 0 { &trace.input } else { &before[b - 1] };
            conv_forward(input, side, layer, &mut trace.conv_out[b]);
            relu_inplace(&mut trace.conv_out[b]);
            maxpool_forward(
                &trace.conv_out[b],
                layer.out_ch,
                side,
                &mut after[0],
                &mut trace.argmax[b],
            );
            side /= 2;
        }
        let features: &[f64] = if self.conv.is_empty() {
            &trace.input
        } else {
            trace.pooled.last().unwrap()
        };
        debug_assert_eq!(features.len(), self.flat_len);

        for j in 0..self.cfg.dense_units {
            let row = &self.dense1_w[j * self.flat_len..(j + 1) * self.flat_len];
            let mut z = self.dense1_b[j];
            for (w, x) in row.iter().zip(features) {
                z += w * x;
            }
            trace.hidden[j] = z.max(0.0);
            let scale = mask.map_or(1.0, |m| m.scales[j]);
            trace.dropped[j] = trace.hidden[j] * scale;
        }
        let mut logit = self.dense2_b;
        for (w, h) in self.dense2_w.iter().zip(&trace.dropped) {
            logit += w * h;
        }
        trace.logit = logit;
        trace.prob = sigmoid(logit);
    }

    /// Per-image probabilities, strictly inside (0, 1); pass a mask for
    /// the training-mode pass.
    pub fn forward(
        &self,
        images: &[NormImage],
        mask: Option<&DropoutMask>,
    ) -> Result<Vec<f64>, TrainerError> {
        Ok(self
            .forward_logits(images, mask)?
            .into_iter()
            .map(|z| sigmoid(z).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
            .collect())
    }

    /// Pre-sigmoid outputs. The dropout expectation test works at this
    /// level, where the mask enters linearly.
    pub fn forward_logits(
        &self,
        images: &[NormImage],
        mask: Option<&DropoutMask>,
    ) -> Result<Vec<f64>, TrainerError> {
        let mut trace = Trace::new(self);
        let mut out = Vec::with_capacity(images.len());
        for img in images {
            self.check_image(img)?;
            self.forward_one(img, mask, &mut trace);
            out.push(trace.logit);
        }
        Ok(out)
    }

    /// Inference-mode probabilities (dropout disabled).
    pub fn predict(&self, images: &[NormImage]) -> Result<Vec<f64>, TrainerError> {
        self.forward(images, None)
    }

    /// Mean BCE of the forward pass under an optional fixed dropout mask.
    pub fn loss(
        &self,
        images: &[NormImage],
        labels: &[u8],
        mask: Option<&DropoutMask>,
    ) -> Result<f64, TrainerError> {
        let preds = self.forward(images, mask)?;
        bce_loss(&preds, labels)
    }

    /// Mean BCE and its exact gradient w.r.t. every parameter, under an
    /// optional fixed dropout mask. Returns the loss at the current
    /// parameters.
    pub fn gradients(
        &self,
        images: &[NormImage],
        labels: &[u8],
        mask: Option<&DropoutMask>,
    ) -> Result<(f64, Gradients), TrainerError> {
        if images.len() != labels.len() {
            return Err(TrainerError::LengthMismatch {
                preds: images.len(),
                labels: labels.len(),
            });
        }
        if images.is_empty() {
            return Err(TrainerError::EmptyDataset);
        }
        let mut grads = Gradients::zeroed(self);
        let mut trace = Trace::new(self);
        let mut probs = Vec::with_capacity(images.len());
        let inv_batch = 1.0 / images.len() as f64;

        for (img, &label) in images.iter().zip(labels) {
            self.check_image(img)?;
            self.forward_one(img, mask, &mut trace);
            probs.push(trace.prob);
            // d(mean BCE)/d(logit) for this item; the loss clamp is
            // inactive wherever the gradient matters.
            let g_logit = (trace.prob - label as f64) * inv_batch;
            self.backward_one(&trace, g_logit, mask, &mut grads);
        }
        let loss = bce_loss(&probs, labels)?;
        Ok((loss, grads))
    }

    // Accumulates one image's parameter gradients given dL/dlogit.
    fn backward_one(&self, trace: &Trace, g_logit: f64, mask: Option<&DropoutMask>, grads: &mut Gradients) {
        let units = self.cfg.dense_units;

        grads.dense2_b += g_logit;
        let mut d_hidden = vec![0.0; units];
        for (j, d) in d_hidden.iter_mut().enumerate() {
            grads.dense2_w[j] += g_logit * trace.dropped[j];
            let scale = mask.map_or(1.0, |m| m.scales[j]);
            // Through dropout, then the ReLU gate.
            let g = g_logit * self.dense2_w[j] * scale;
            *d = if trace.hidden[j] > 0.0 { g } else { 0.0 };
        }

        let features: &[f64] = if self.conv.is_empty() {
            &trace.input
        } else {
            trace.pooled.last().unwrap()
        };
        let mut d_features = vec![0.0; self.flat_len];
        for (j, &dj) in d_hidden.iter().enumerate() {
            if dj == 0.0 {
                continue;
            }
            grads.dense1_b[j] += dj;
            let w_row = &self.dense1_w[j * self.flat_len..(j + 1) * self.flat_len];
            let g_row = &mut grads.dense1_w[j * self.flat_len..(j + 1) * self.flat_len];
            for i in 0..self.flat_len {
                g_row[i] += dj * features[i];
                d_features[i] += dj * w_row[i];
            }
        }

        // Walk conv blocks backward; d_pool is the gradient at the
        // pooled output of the current block.
        let mut d_pool = d_features;
        let mut side = self.cfg.input_side >> self.conv.len();
        for b in (0..self.conv.len()).rev() {
            let layer = &self.conv[b];
            let act = &trace.conv_out[b];
            side *= 2;

            // Unpool: route each pooled gradient to its argmax source,
            // then gate by the ReLU.
            let mut d_act = vec![0.0; act.len()];
            for (i, &g) in d_pool.iter().enumerate() {
                let src = trace.argmax[b][i] as usize;
                if act[src] > 0.0 {
                    d_act[src] += g;
                }
            }

            let input: &[f64] = if b == 0 { &trace.input } else { &trace.pooled[b - 1] };
            let want_input_grad = b > 0;
            let d_input = conv_backward(
                input,
                side,
                layer,
                &d_act,
                &mut grads.conv_w[b],
                &mut grads.conv_b[b],
                want_input_grad,
            );
            if want_input_grad {
                d_pool = d_input;
            }
        }
    }
}

// Gradients w.r.t. conv weights/biases, plus optionally the input.
fn conv_backward(
    input: &[f64],
    side: usize,
    layer: &ConvLayer,
    d_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    want_input_grad: bool,
) -> Vec<f64> {
    let k = layer.kernel;
    let pad = (k / 2) as isize;
    let plane = side * side;
    let mut d_input = if want_input_grad {
        vec![0.0; layer.in_ch * plane]
    } else {
        Vec::new()
    };

    for oc in 0..layer.out_ch {
        let d_plane = &d_out[oc * plane..(oc + 1) * plane];
        grad_b[oc] += d_plane.iter().sum::<f64>();
        for ic in 0..layer.in_ch {
            let in_plane = &input[ic * plane..(ic + 1) * plane];
            for ky in 0..k {
                let dy = ky as isize - pad;
                for kx in 0..k {
                    let dx = kx as isize - pad;
                    let w_idx = ((oc * layer.in_ch + ic) * k + ky) * k + kx;
                    let y0 = (-dy).max(0) as usize;
                    let y1 = (side as isize - dy.max(0)) as usize;
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (side as isize - dx.max(0)) as usize;
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let iy = (y as isize + dy) as usize;
                        let in_start = (iy * side) as isize + dx;
                        let in_row = &in_plane[(in_start + x0 as isize) as usize
                            ..(in_start + x1 as isize) as usize];
                        let d_row = &d_plane[y * side + x0..y * side + x1];
                        for (&g, &i) in d_row.iter().zip(in_row) {
                            acc += g * i;
                        }
                        if want_input_grad {
                            let w = layer.weights[w_idx];
                            let di_row = &mut d_input[ic * plane
                                + (in_start + x0 as isize) as usize
                                ..ic * plane + (in_start + x1 as isize) as usize];
                            for (di, &g) in di_row.iter_mut().zip(d_row) {
                                *di += w * g;
                            }
                        }
                    }
                    grad_w[w_idx] += acc;
                }
            }
        }
    }
    d_input
}

impl Gradients {
    fn zeroed(model: &Model) -> Gradients {
        Gradients {
            conv_w: model.conv.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            conv_b: model.conv.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
            dense1_w: vec![0.0; model.dense1_w.len()],
            dense1_b: vec![0.0; model.dense1_b.len()],
            dense2_w: vec![0.0; model.dense2_w.len()],
            dense2_b: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|v| v.is_finite())
    }

    /// All gradients in the [`Model::params_flat`] order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.conv_w.iter().zip(&self.conv_b) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out.extend_from_slice(&self.dense1_w);
        out.extend_from_slice(&self.dense1_b);
        out.extend_from_slice(&self.dense2_w);
        out.push(self.dense2_b);
        out
    }
}

impl Model {
    /// All parameters as one vector: conv blocks in order (weights then
    /// biases), dense1 weights, dense1 biases, dense2 weights, dense2
    /// bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.conv {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        out.extend_from_slice(&self.dense1_w);
        out.extend_from_slice(&self.dense1_b);
        out.extend_from_slice(&self.dense2_w);
        out.push(self.dense2_b);
        out
    }

    /// Restores parameters from a [`Model::params_flat`] vector.
    pub fn set_params_flat(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "parameter count mismatch");
        let mut offset = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&params[offset..offset + dst.len()]);
            offset += dst.len();
        };
        for layer in &mut self.conv {
            take(&mut layer.weights);
            take(&mut layer.biases);
        }
        take(&mut self.dense1_w);
        take(&mut self.dense1_b);
        take(&mut self.dense2_w);
        self.dense2_b = params[offset];
    }
}

/// One SGD step: computes gradients on the batch, checks them for
/// finiteness, applies `param -= lr * grad`, and returns the pre-step
/// batch loss. The caller supplies the per-step dropout mask.
///
/// On divergence the error's step index is 0; [`train`] rewrites it.
pub fn backward_and_step(
    model: &mut Model,
    images: &[NormImage],
    labels: &[u8],
    lr: f64,
    mask: Option<&DropoutMask>,
) -> Result<f64, TrainerError> {
    let (loss, grads) = model.gradients(images, labels, mask)?;
    if !loss.is_finite() || !grads.is_finite() {
        return Err(TrainerError::NonFiniteGradient { step: 0 });
    }
    for (layer, (gw, gb)) in model
        .conv
        .iter_mut()
        .zip(grads.conv_w.iter().zip(&grads.conv_b))
    {
        for (w, g) in layer.weights.iter_mut().zip(gw) {
            *w -= lr * g;
        }
        for (b, g) in layer.biases.iter_mut().zip(gb) {
            *b -= lr * g;
        }
    }
    for (w, g) in model.dense1_w.iter_mut().zip(&grads.dense1_w) {
        *w -= lr * g;
    }
    for (b, g) in model.dense1_b.iter_mut().zip(&grads.dense1_b) {
        *b -= lr * g;
    }
    for (w, g) in model.dense2_w.iter_mut().zip(&grads.dense2_w) {
        *w -= lr * g;
    }
    model.dense2_b -= lr * grads.dense2_b;
    debug_assert!(
        model.params_flat().iter().all(|p| p.is_finite()),
        "finite gradients must yield finite parameters"
    );
    Ok(loss)
}

/// Labeled image set fed to [`train`] and [`evaluate`].
#[derive(Debug, Clone)]
pub struct LabeledImages {
    pub images: Vec<NormImage>,
    pub labels: Vec<u8>,
}

impl LabeledImages {
    pub fn new(images: Vec<NormImage>, labels: Vec<u8>) -> Result<Self, TrainerError> {
        if images.len() != labels.len() {
            return Err(TrainerError::LengthMismatch {
                preds: images.len(),
                labels: labels.len(),
            });
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Loss and accuracy with dropout disabled.
pub fn evaluate(model: &Model, data: &LabeledImages) -> Result<(f64, f64), TrainerError> {
    if data.is_empty() {
        return Err(TrainerError::EmptyDataset);
    }
    let preds = model.predict(&data.images)?;
    let loss = bce_loss(&preds, &data.labels)?;
    Ok((loss, accuracy(&preds, &data.labels)))
}

/// One evaluation point of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct LogPoint {
    pub step: u64,
    pub epoch: u64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// Per-evaluation-point record of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub points: Vec<LogPoint>,
    pub run_id: String,
    pub config_hash: String,
}

pub const RUN_LOG_HEADER: &str = "step,epoch,train_loss,train_acc,val_loss,val_acc";

impl RunLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(RUN_LOG_HEADER);
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.step, p.epoch, p.train_loss, p.train_acc, p.val_loss, p.val_acc
            ));
        }
        out
    }

    /// Parses the CSV form. The config hash is not part of the CSV; it
    /// is stored in the sidecar config file.
    pub fn from_csv(text: &str, run_id: &str) -> Result<RunLog, TrainerError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim_end_matches('\r') == RUN_LOG_HEADER => {}
            other => {
                return Err(TrainerError::MalformedLog(format!(
                    "bad header: `{}`",
                    other.unwrap_or("")
                )))
            }
        }
        let mut points = Vec::new();
        let mut last_step = 0u64;
        for (idx, raw) in lines.enumerate() {
            let row = raw.trim_end_matches('\r');
            if row.is_empty() {
                continue;
            }
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() != 6 {
                return Err(TrainerError::MalformedLog(format!(
                    "row {}: expected 6 columns",
                    idx + 2
                )));
            }
            let parse_f = |s: &str| -> Result<f64, TrainerError> {
                s.parse()
                    .map_err(|_| TrainerError::MalformedLog(format!("bad number `{s}`")))
            };
            let point = LogPoint {
                step: fields[0]
                    .parse()
                    .map_err(|_| TrainerError::MalformedLog(format!("bad step `{}`", fields[0])))?,
                epoch: fields[1]
                    .parse()
                    .map_err(|_| TrainerError::MalformedLog(format!("bad epoch `{}`", fields[1])))?,
                train_loss: parse_f(fields[2])?,
                train_acc: parse_f(fields[3])?,
                val_loss: parse_f(fields[4])?,
                val_acc: parse_f(fields[5])?,
            };
            if point.step <= last_step {
                return Err(TrainerError::MalformedLog(
                    "steps must be strictly increasing".into(),
                ));
            }
            last_step = point.step;
            points.push(point);
        }
        Ok(RunLog {
            points,
            run_id: run_id.to_string(),
            config_hash: String::new(),
        })
    }
}

/// Trains a fresh model. Each epoch reshuffles the training set with
/// the seeded generator; every `eval_every` steps both sets are
/// evaluated with dropout disabled. Deterministic for fixed seeds.
pub fn train(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    train_data: &LabeledImages,
    val_data: &LabeledImages,
    run_id: &str,
) -> Result<(Model, RunLog), TrainerError> {
    train_cfg.validate()?;
    if train_data.is_empty() || val_data.is_empty() {
        return Err(TrainerError::EmptyDataset);
    }
    let mut model = build_model(model_cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut points = Vec::new();
    let mut step = 0u64;

    for epoch in 1..=train_cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(train_cfg.batch_size) {
            step += 1;
            let batch_images: Vec<NormImage> = chunk
                .iter()
                .map(|&i| train_data.images[i].clone())
                .collect();
            let batch_labels: Vec<u8> = chunk.iter().map(|&i| train_data.labels[i]).collect();
            let mask = model.sample_dropout_mask(&mut rng);
            backward_and_step(
                &mut model,
                &batch_images,
                &batch_labels,
                train_cfg.learning_rate,
                Some(&mask),
            )
            .map_err(|e| match e {
                TrainerError::NonFiniteGradient { .. } => TrainerError::NonFiniteGradient { step },
                other => other,
            })?;

            if step.is_multiple_of(train_cfg.eval_every) {
                let (train_loss, train_acc) = evaluate(&model, train_data)?;
                let (val_loss, val_acc) = evaluate(&model, val_data)?;
                points.push(LogPoint {
                    step,
                    epoch: epoch as u64,
                    train_loss,
                    train_acc,
                    val_loss,
                    val_acc,
                });
            }
        }
    }

    let log = RunLog {
        points,
        run_id: run_id.to_string(),
        config_hash: config_hash(model_cfg, train_cfg),
    };
    Ok((model, log))
}
