//! Joint optimization of the gamma parameters, fusion network, and task
//! head with SGD-momentum under a linear-warmup + cosine-decay schedule.
//!
//! Training is bitwise reproducible for a fixed config: initialization,
//! shuffling, and gradient reduction all run in fixed seeded order on a
//! single thread.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bayer::pack;
use crate::error::{Error, Result};
use crate::gge::{GammaParams, GAMMA_MAX_DEFAULT, GAMMA_MIN_DEFAULT};
use crate::ggle::{GgleWeights, GuidanceMode};
use crate::nn::Mode;
use crate::surrogate::{sample_loss, ToyHead, ToySample, DEFAULT_LAMBDA};
use crate::tensor::{ParamTensor, Tensor};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub min_lr: f64,
    pub momentum: f64,
    pub lambda: f64,
    pub seed: u64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub guidance_mode: GuidanceMode,
    pub freeze_gge: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            warmup_epochs: 2,
            batch_size: 8,
            base_lr: 0.01,
            min_lr: 1e-4,
            momentum: 0.9,
            lambda: DEFAULT_LAMBDA,
            seed: 0,
            gamma_min: GAMMA_MIN_DEFAULT,
            gamma_max: GAMMA_MAX_DEFAULT,
            guidance_mode: GuidanceMode::Gg,
            freeze_gge: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.epochs > 0 && self.warmup_epochs >= self.epochs {
            return Err(Error::Config(format!(
                "warmup epochs ({}) must be below total epochs ({})",
                self.warmup_epochs, self.epochs
            )));
        }
        if self.base_lr <= self.min_lr
            || self.min_lr < 0.0
            || !self.base_lr.is_finite()
            || !self.min_lr.is_finite()
        {
            return Err(Error::Config(format!(
                "require base_lr > min_lr >= 0, got {} and {}",
                self.base_lr, self.min_lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda {} must be non-negative", self.lambda)));
        }
        if self.gamma_min <= 0.0
            || self.gamma_min >= self.gamma_max
            || !self.gamma_min.is_finite()
            || !self.gamma_max.is_finite()
        {
            return Err(Error::Config(format!(
                "gamma bounds must satisfy 0 < min < max, got ({}, {})",
                self.gamma_min, self.gamma_max
            )));
        }
        Ok(())
    }
}

/// Linear warmup from 0 to `base_lr` over `warmup_steps`, then cosine
/// decay to `min_lr` at `total_steps`.
pub fn lr_at(
    step: usize,
    total_steps: usize,
    warmup_steps: usize,
    base_lr: f64,
    min_lr: f64,
) -> Result<f64> {
    if total_steps == warmup_steps {
        return Err(Error::Config(
            "schedule needs at least one post-warmup step".into(),
        ));
    }
    if warmup_steps > total_steps || step > total_steps {
        return Err(Error::Config(format!(
            "schedule indices out of range: step {step}, warmup {warmup_steps}, total {total_steps}"
        )));
    }
    if step < warmup_steps {
        return Ok(base_lr * step as f64 / warmup_steps as f64);
    }
    let t = (step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64;
    Ok(min_lr + (base_lr - min_lr) * (1.0 + (std::f64::consts::PI * t).cos()) / 2.0)
}

/// SGD with classical momentum: `v ← μ·v + g`, `p ← p − lr·v`.
/// Gradients are zeroed after each step.
#[derive(Debug)]
pub struct SgdMomentum {
    momentum: f32,
    velocity: Vec<Tensor<f32>>,
}

impl SgdMomentum {
    pub fn new(momentum: f32) -> Self {
        Self { momentum, velocity: Vec::new() }
    }

    pub fn step(&mut self, params: &mut [&mut ParamTensor<f32>], lr: f32) -> Result<()> {
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        }
        if self.velocity.len() != params.len() {
            return Err(Error::Config(format!(
                "optimizer state holds {} slots, got {} parameters",
                self.velocity.len(),
                params.len()
            )));
        }
        for (param, vel) in params.iter_mut().zip(self.velocity.iter_mut()) {
            let v = vel.data_mut();
            let g = param.grad.data();
            let p = param.value.data_mut();
            for i in 0..p.len() {
                v[i] = self.momentum * v[i] + g[i];
                p[i] -= lr * v[i];
            }
            param.zero_grad();
        }
        Ok(())
    }
}

/// One line of the per-epoch progress log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
    pub gamma: [f32; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs: Vec<EpochLog>,
}

/// The full trainable stack.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub gge: GammaParams<f32>,
    pub ggle: GgleWeights<f32>,
    pub head: ToyHead<f32>,
}

impl TrainedModel {
    /// Fresh model with sub-seeds split deterministically off `cfg.seed`.
    pub fn init(cfg: &TrainConfig) -> Result<Self> {
        let mut root = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self::init_with_rng(cfg, &mut root)
    }

    fn init_with_rng(cfg: &TrainConfig, root: &mut ChaCha8Rng) -> Result<Self> {
        let ggle_seed = root.next_u64();
        let head_seed = root.next_u64();
        Ok(Self {
            gge: GammaParams::new(cfg.gamma_min as f32, cfg.gamma_max as f32)?,
            ggle: GgleWeights::init(cfg.guidance_mode, ggle_seed),
            head: ToyHead::init(head_seed),
        })
    }

    pub fn param_count(&self) -> usize {
        self.gge.param_count() + self.ggle.param_count() + self.head.param_count()
    }

    fn trainable_params(&mut self, freeze_gge: bool) -> Vec<&mut ParamTensor<f32>> {
        let mut out: Vec<&mut ParamTensor<f32>> = Vec::new();
        if !freeze_gge {
            out.push(&mut self.gge.alpha);
        }
        out.extend(self.ggle.named_params_mut().into_iter().map(|(_, p)| p));
        out.extend(self.head.named_params_mut().into_iter().map(|(_, p)| p));
        out
    }
}

/// Pack every sample frame once; all frames must share one size.
pub fn pack_dataset(dataset: &[ToySample]) -> Result<Vec<Tensor<f32>>> {
    if dataset.is_empty() {
        return Err(Error::Config("dataset must not be empty".into()));
    }
    let packed: Vec<Tensor<f32>> = dataset.iter().map(|s| pack(&s.frame).to_tensor()).collect();
    let first = packed[0].shape().to_vec();
    if packed.iter().any(|t| t.shape() != first) {
        return Err(Error::Config("dataset frames have mixed sizes".into()));
    }
    Ok(packed)
}

fn batch_pass(
    model: &mut TrainedModel,
    packed: &[Tensor<f32>],
    dataset: &[ToySample],
    indices: &[usize],
    lambda: f32,
    backprop: bool,
) -> Result<f64> {
    let b = indices.len();
    let (h, w) = (packed[0].dim(1), packed[0].dim(2));
    let mut batch = Tensor::zeros(&[b, 4, h, w]);
    let frame_len = 4 * h * w;
    for (row, &idx) in indices.iter().enumerate() {
        batch.data_mut()[row * frame_len..(row + 1) * frame_len]
            .copy_from_slice(packed[idx].data());
    }
    let (x_gamma, gge_cache) = model.gge.forward(&batch)?;
    let (enhanced, ggle_cache) = model.ggle.forward(&x_gamma, Mode::Train)?;
    let (out, head_cache) = model.head.forward(&enhanced, Mode::Train)?;
    let mut loss_sum = 0.0f64;
    let mut grad_out = Tensor::zeros(&[b, 3]);
    let inv_b = 1.0 / b as f32;
    for (row, &idx) in indices.iter().enumerate() {
        let logit = out.data()[row * 3];
        let reg = [out.data()[row * 3 + 1], out.data()[row * 3 + 2]];
        let (loss, grad) = sample_loss(logit, reg, &dataset[idx], lambda)?;
        loss_sum += loss as f64;
        grad_out.data_mut()[row * 3] = grad.d_logit * inv_b;
        grad_out.data_mut()[row * 3 + 1] = grad.d_reg[0] * inv_b;
        grad_out.data_mut()[row * 3 + 2] = grad.d_reg[1] * inv_b;
    }
    if backprop {
        let d_enhanced = model.head.backward(head_cache, &grad_out)?;
        let d_x_gamma = model.ggle.backward(ggle_cache, &d_enhanced)?;
        model.gge.backward(gge_cache, &d_x_gamma)?;
    }
    Ok(loss_sum / b as f64)
}

/// Mean train-mode loss over the whole dataset, computed on a throwaway
/// copy of the model so running statistics are untouched.
pub fn evaluate_mean_loss(
    model: &TrainedModel,
    packed: &[Tensor<f32>],
    dataset: &[ToySample],
    cfg: &TrainConfig,
) -> Result<f64> {
    let mut probe = model.clone();
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let mut total = 0.0;
    for chunk in indices.chunks(cfg.batch_size) {
        let mean = batch_pass(&mut probe, packed, dataset, chunk, cfg.lambda as f32, false)?;
        total += mean * chunk.len() as f64;
    }
    Ok(total / dataset.len() as f64)
}

/// Train end to end. Emits one progress line per epoch on stdout:
/// `epoch=K loss=L lr=R gamma=[g0,g1,g2,g3]`.
pub fn train(cfg: &TrainConfig, dataset: &[ToySample]) -> Result<(TrainedModel, TrainReport)> {
    cfg.validate()?;
    let packed = pack_dataset(dataset)?;
    let mut root = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = TrainedModel::init_with_rng(cfg, &mut root)?;
    let shuffle_base = root.next_u64();

    let n = dataset.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let warmup_steps = cfg.warmup_epochs * steps_per_epoch;

    let initial_loss = evaluate_mean_loss(&model, &packed, dataset, cfg)?;
    let divergence_ceiling = 100.0 * initial_loss;
    let mut optimizer = SgdMomentum::new(cfg.momentum as f32);
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut global_step = 0usize;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut epoch_rng = ChaCha8Rng::seed_from_u64(shuffle_base.wrapping_add(epoch as u64));
        order.shuffle(&mut epoch_rng);
        let mut loss_sum = 0.0f64;
        let mut last_lr = 0.0f64;
        for chunk in order.chunks(cfg.batch_size) {
            let lr = lr_at(global_step, total_steps, warmup_steps, cfg.base_lr, cfg.min_lr)?;
            let loss = batch_pass(&mut model, &packed, dataset, chunk, cfg.lambda as f32, true)?;
            if !loss.is_finite() || loss > divergence_ceiling {
                return Err(Error::Diverged { step: global_step, loss });
            }
            let mut params = model.trainable_params(cfg.freeze_gge);
            optimizer.step(&mut params, lr as f32)?;
            if cfg.freeze_gge {
                model.gge.alpha.zero_grad();
            }
            loss_sum += loss * chunk.len() as f64;
            last_lr = lr;
            global_step += 1;
        }
        let mean_loss = loss_sum / n as f64;
        let g = model.gge.gammas()?;
        println!(
            "epoch={epoch} loss={mean_loss:.6} lr={last_lr:.6} gamma=[{:.6},{:.6},{:.6},{:.6}]",
            g[0], g[1], g[2], g[3]
        );
        logs.push(EpochLog { epoch, mean_loss, lr: last_lr, gamma: g });
    }

    let final_loss = if cfg.epochs == 0 {
        initial_loss
    } else {
        evaluate_mean_loss(&model, &packed, dataset, cfg)?
    };
    Ok((model, TrainReport { initial_loss, final_loss, epochs: logs }))
}
