//! Desk-scale downstream task: dark synthetic scenes with an optional
//! bright square, a tiny classification+regression head, and the joint
//! loss `L = L_cls + λ·L_reg` that drives end-to-end training.

use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bayer::{load_bayer, save_bayer, BayerFrame};
use crate::error::{Error, Result};
use crate::nn::{global_avg_pool, global_avg_pool_backward, he_normal, ConvBlock, ConvBlockCache, Linear, LinearCache, Mode};
use crate::sensor::{synthesize_raw, RadianceMap, SensorModel};
use crate::tensor::{lit, ParamTensor, Scalar, Tensor};

/// Packed-resolution side length of generated scenes (mosaics are 2×).
pub const SCENE_SIZE: usize = 16;
/// Half-width of the bright square, giving a 5×5 object.
const SQUARE_HALF: usize = 2;

pub const DEFAULT_LAMBDA: f64 = 3.0;

/// One labelled capture: the mosaic, whether an object is present, and
/// (for positives) the normalized object-center offset.
#[derive(Debug, Clone)]
pub struct ToySample {
    pub frame: BayerFrame,
    pub cls_label: bool,
    /// `(x, y)` center in `[0, 1]`; present iff `cls_label`.
    pub reg_target: Option<[f32; 2]>,
}

/// Deterministic synthetic dataset with exact 50/50 class balance
/// (even indices positive). Per-sample seeds are split off the root
/// seed so generation order is irrelevant.
pub fn make_dataset(n: usize, model: &SensorModel, seed: u64) -> Result<Vec<ToySample>> {
    if n == 0 {
        return Err(Error::Config("dataset size must be at least 1".into()));
    }
    let mut root = ChaCha8Rng::seed_from_u64(seed);
    let sample_seeds: Vec<u64> = (0..n).map(|_| root.next_u64()).collect();
    sample_seeds
        .iter()
        .enumerate()
        .map(|(i, &s)| make_sample(i, s, model))
        .collect()
}

fn make_sample(index: usize, sample_seed: u64, model: &SensorModel) -> Result<ToySample> {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let positive = index.is_multiple_of(2);
    let background = 0.02 + 0.06 * rng.random::<f32>();
    let mut scene = RadianceMap::filled(SCENE_SIZE, SCENE_SIZE, [background; 3])?;
    let mut reg_target = None;
    if positive {
        let cy = rng.random_range(SQUARE_HALF..SCENE_SIZE - SQUARE_HALF);
        let cx = rng.random_range(SQUARE_HALF..SCENE_SIZE - SQUARE_HALF);
        let brightness = 0.6 + 0.3 * rng.random::<f32>();
        for y in cy - SQUARE_HALF..=cy + SQUARE_HALF {
            for x in cx - SQUARE_HALF..=cx + SQUARE_HALF {
                scene.set(y, x, [brightness; 3]);
            }
        }
        let norm = (SCENE_SIZE - 1) as f32;
        reg_target = Some([cx as f32 / norm, cy as f32 / norm]);
    }
    let frame = synthesize_raw(&scene, &model.with_seed(rng.next_u64()))?;
    Ok(ToySample { frame, cls_label: positive, reg_target })
}

// ── Dataset manifest ───────────────────────────────────────────────

/// On-disk dataset index: one PGM + sidecar pair per sample, with the
/// label and regression target. Paths are relative to the manifest.
#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub samples: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pgm: String,
    pub meta: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cls_label: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reg_target: Option<[f32; 2]>,
}

pub const DATASET_MANIFEST_FILE: &str = "manifest.json";

/// Materialize samples as `sample_NNNNN.pgm/.json` pairs plus a
/// `manifest.json` index in `dir`.
pub fn save_dataset(dir: impl AsRef<Path>, samples: &[ToySample]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(samples.len());
    for (i, sample) in samples.iter().enumerate() {
        let pgm = format!("sample_{i:05}.pgm");
        let meta = format!("sample_{i:05}.json");
        save_bayer(&sample.frame, dir.join(&pgm), dir.join(&meta))?;
        entries.push(ManifestEntry {
            pgm,
            meta,
            cls_label: Some(sample.cls_label as u8),
            reg_target: sample.reg_target,
        });
    }
    let manifest = DatasetManifest { samples: entries };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(dir.join(DATASET_MANIFEST_FILE), text)?;
    Ok(())
}

/// Load a labelled dataset back from its manifest.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Vec<ToySample>> {
    let manifest_path = manifest_path.as_ref();
    let text = std::fs::read_to_string(manifest_path)?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    manifest
        .samples
        .iter()
        .map(|entry| {
            let frame = load_bayer(base.join(&entry.pgm), base.join(&entry.meta))?;
            let cls_label = match entry.cls_label {
                Some(0) => false,
                Some(1) => true,
                Some(other) => {
                    return Err(Error::Config(format!("manifest label {other} is not 0/1")))
                }
                None => {
                    return Err(Error::Config(
                        "manifest entry lacks a label; not a training dataset".into(),
                    ))
                }
            };
            if cls_label && entry.reg_target.is_none() {
                return Err(Error::Config(
                    "positive manifest entry lacks its regression target".into(),
                ));
            }
            Ok(ToySample { frame, cls_label, reg_target: entry.reg_target })
        })
        .collect()
}

// ── Loss ───────────────────────────────────────────────────────────

/// Gradient of the joint loss w.r.t. the head outputs.
#[derive(Debug, Clone, Copy)]
pub struct LossGrad<T> {
    pub d_logit: T,
    pub d_reg: [T; 2],
}

/// `L = bce(logit, label) + λ · Σ(reg − target)²`, with the regression
/// term masked to zero on negative samples.
pub fn total_loss<T: Scalar>(
    cls_logit: T,
    reg_pred: [T; 2],
    cls_label: bool,
    reg_target: Option<[T; 2]>,
    lambda: T,
) -> Result<(T, LossGrad<T>)> {
    if !cls_logit.is_finite()
        || reg_pred.iter().any(|v| !v.is_finite())
        || !lambda.is_finite()
    {
        return Err(Error::NonFinite("loss inputs".into()));
    }
    let y = if cls_label { T::one() } else { T::zero() };
    // numerically stable binary cross-entropy on the raw logit
    let z = cls_logit;
    let cls = z.max(T::zero()) - z * y + (T::one() + (-z.abs()).exp()).ln();
    let sigmoid = T::one() / (T::one() + (-z).exp());
    let d_logit = sigmoid - y;
    let (reg, d_reg) = if cls_label {
        let target = reg_target.ok_or_else(|| {
            Error::Config("positive sample is missing its regression target".into())
        })?;
        let d0 = reg_pred[0] - target[0];
        let d1 = reg_pred[1] - target[1];
        let two = lit::<T>(2.0);
        (d0 * d0 + d1 * d1, [lambda * two * d0, lambda * two * d1])
    } else {
        (T::zero(), [T::zero(); 2])
    };
    let total = cls + lambda * reg;
    Ok((total, LossGrad { d_logit, d_reg }))
}

/// Convenience wrapper taking the sample's own label and target.
pub fn sample_loss(
    cls_logit: f32,
    reg_pred: [f32; 2],
    sample: &ToySample,
    lambda: f32,
) -> Result<(f32, LossGrad<f32>)> {
    total_loss(cls_logit, reg_pred, sample.cls_label, sample.reg_target, lambda)
}

// ── Head ───────────────────────────────────────────────────────────

/// Minimal task head: one conv block on the enhanced image, global
/// average pooling, and a linear map to `[logit, reg_x, reg_y]`.
#[derive(Debug, Clone)]
pub struct ToyHead<T = f32> {
    pub block: ConvBlock<T>,
    pub fc: Linear<T>,
}

#[derive(Debug)]
pub struct ToyHeadCache<T> {
    block: ConvBlockCache<T>,
    fc: LinearCache<T>,
    h: usize,
    w: usize,
}

pub const HEAD_FEATURES: usize = 8;

impl ToyHead<f32> {
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block = ConvBlock::init(&mut rng, 3, HEAD_FEATURES);
        let fc_weight = he_normal(&mut rng, &[3, HEAD_FEATURES], 1.0);
        let fc = Linear::new(fc_weight, Tensor::zeros(&[3])).expect("head init shape");
        Self { block, fc }
    }
}

impl<T: Scalar> ToyHead<T> {
    pub fn param_count(&self) -> usize {
        self.block.param_count() + self.fc.param_count()
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut ParamTensor<T>)> {
        let mut out = self.block.named_params_mut("head.block");
        let [w, b] = self.fc.params_mut();
        out.push(("head.fc.weight".to_string(), w));
        out.push(("head.fc.bias".to_string(), b));
        out
    }

    /// Same parameters and order as [`Self::named_params_mut`].
    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        let mut out = self.block.params_mut();
        out.extend(self.fc.params_mut());
        out
    }

    pub fn named_state(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = self.block.named_state("head.block");
        out.push(("head.fc.weight".to_string(), &self.fc.weight.value));
        out.push(("head.fc.bias".to_string(), &self.fc.bias.value));
        out
    }

    pub fn named_state_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = self.block.named_state_mut("head.block");
        out.push(("head.fc.weight".to_string(), &mut self.fc.weight.value));
        out.push(("head.fc.bias".to_string(), &mut self.fc.bias.value));
        out
    }

    pub fn cast<U: Scalar>(&self) -> ToyHead<U> {
        ToyHead { block: self.block.cast(), fc: self.fc.cast() }
    }

    /// `[N, 3, H, W]` → `[N, 3]` rows of `(logit, reg_x, reg_y)`.
    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, ToyHeadCache<T>)> {
        let (features, block_cache) = self.block.forward(input, mode)?;
        let (h, w) = (features.dim(2), features.dim(3));
        let pooled = global_avg_pool(&features)?;
        let (out, fc_cache) = self.fc.forward(&pooled)?;
        Ok((out, ToyHeadCache { block: block_cache, fc: fc_cache, h, w }))
    }

    pub fn backward(&mut self, cache: ToyHeadCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let d_pooled = self.fc.backward(cache.fc, grad_out)?;
        let d_features = global_avg_pool_backward(&d_pooled, cache.h, cache.w)?;
        self.block.backward(cache.block, &d_features)
    }
}
