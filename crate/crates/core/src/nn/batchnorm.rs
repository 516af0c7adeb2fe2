//! Per-channel batch normalization over `[N, C, H, W]` tensors.

use super::conv::dims4;
use super::Mode;
use crate::error::{Error, Result};
use crate::tensor::{lit, ParamTensor, Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Batch norm with learnable scale/shift and running statistics.
///
/// Running statistics are state, not learnable parameters; they are
/// excluded from parameter counts and optimizer updates.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T = f32> {
    pub scale: ParamTensor<T>,
    pub shift: ParamTensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: T,
    pub momentum: T,
}

#[derive(Debug)]
pub struct BatchNormCache<T> {
    normalized: Tensor<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            scale: ParamTensor::new(Tensor::filled(&[channels], T::one())),
            shift: ParamTensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], T::one()),
            eps: lit(BN_EPS),
            momentum: lit(BN_MOMENTUM),
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    pub fn param_count(&self) -> usize {
        self.scale.len() + self.shift.len()
    }

    pub fn params_mut(&mut self) -> [&mut ParamTensor<T>; 2] {
        [&mut self.scale, &mut self.shift]
    }

    pub fn cast<U: Scalar>(&self) -> BatchNorm2d<U> {
        BatchNorm2d {
            scale: self.scale.cast(),
            shift: self.shift.cast(),
            running_mean: self.running_mean.cast(),
            running_var: self.running_var.cast(),
            eps: U::from(self.eps).expect("eps cast"),
            momentum: U::from(self.momentum).expect("momentum cast"),
        }
    }

    /// Train mode normalizes with batch statistics and updates the running
    /// estimates (`new = (1-momentum)·old + momentum·batch`, unbiased
    /// variance); eval mode normalizes with the running estimates.
    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        let [n, c, h, w] = dims4(input, "batchnorm input")?;
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "batchnorm expects {} channels, got {c}",
                self.channels()
            )));
        }
        let plane = h * w;
        let m = n * plane;
        if mode == Mode::Train && m < 2 {
            return Err(Error::DegenerateBatch);
        }
        let count = lit::<T>(m as f64);
        let mut out = Tensor::zeros(input.shape());
        let mut normalized = Tensor::zeros(input.shape());
        let mut inv_std = vec![T::zero(); c];
        let idat = input.data();
        for ch in 0..c {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut sum = T::zero();
                    for b in 0..n {
                        let base = (b * c + ch) * plane;
                        for i in 0..plane {
                            sum = sum + idat[base + i];
                        }
                    }
                    let mean = sum / count;
                    let mut sq = T::zero();
                    for b in 0..n {
                        let base = (b * c + ch) * plane;
                        for i in 0..plane {
                            let d = idat[base + i] - mean;
                            sq = sq + d * d;
                        }
                    }
                    let var = sq / count;
                    let unbiased = sq / lit::<T>((m - 1) as f64);
                    let keep = T::one() - self.momentum;
                    let rm = self.running_mean.data_mut();
                    rm[ch] = keep * rm[ch] + self.momentum * mean;
                    let rv = self.running_var.data_mut();
                    rv[ch] = keep * rv[ch] + self.momentum * unbiased;
                    (mean, var)
                }
                Mode::Eval => (self.running_mean.data()[ch], self.running_var.data()[ch]),
            };
            let istd = T::one() / (var + self.eps).sqrt();
            inv_std[ch] = istd;
            let gamma = self.scale.value.data()[ch];
            let beta = self.shift.value.data()[ch];
            let ndat = normalized.data_mut();
            for b in 0..n {
                let base = (b * c + ch) * plane;
                for i in 0..plane {
                    ndat[base + i] = (idat[base + i] - mean) * istd;
                }
            }
            let ndat = normalized.data();
            let odat = out.data_mut();
            for b in 0..n {
                let base = (b * c + ch) * plane;
                for i in 0..plane {
                    odat[base + i] = gamma * ndat[base + i] + beta;
                }
            }
        }
        Ok((out, BatchNormCache { normalized, inv_std, mode }))
    }

    /// Train-mode input gradient includes the batch-statistic terms:
    /// `dx = γ·istd·(dy − mean(dy) − x̂·mean(dy·x̂))`.
    pub fn backward(&mut self, cache: BatchNormCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let xhat = &cache.normalized;
        if grad_out.shape() != xhat.shape() {
            return Err(Error::Shape(format!(
                "batchnorm grad_out must be {:?}, got {:?}",
                xhat.shape(),
                grad_out.shape()
            )));
        }
        let [n, c, h, w] = dims4(xhat, "batchnorm cache")?;
        let plane = h * w;
        let count = lit::<T>((n * plane) as f64);
        let mut grad_in = Tensor::zeros(xhat.shape());
        let xdat = xhat.data();
        let gdat = grad_out.data();
        let gidat = grad_in.data_mut();
        let gscale = self.scale.grad.data_mut();
        let gshift = self.shift.grad.data_mut();
        for ch in 0..c {
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for b in 0..n {
                let base = (b * c + ch) * plane;
                for i in 0..plane {
                    sum_dy = sum_dy + gdat[base + i];
                    sum_dy_xhat = sum_dy_xhat + gdat[base + i] * xdat[base + i];
                }
            }
            gshift[ch] = gshift[ch] + sum_dy;
            gscale[ch] = gscale[ch] + sum_dy_xhat;
            let gamma = self.scale.value.data()[ch];
            let istd = cache.inv_std[ch];
            match cache.mode {
                Mode::Train => {
                    let mean_dy = sum_dy / count;
                    let mean_dy_xhat = sum_dy_xhat / count;
                    for b in 0..n {
                        let base = (b * c + ch) * plane;
                        for i in 0..plane {
                            gidat[base + i] = gamma
                                * istd
                                * (gdat[base + i] - mean_dy - xdat[base + i] * mean_dy_xhat);
                        }
                    }
                }
                Mode::Eval => {
                    for b in 0..n {
                        let base = (b * c + ch) * plane;
                        for i in 0..plane {
                            gidat[base + i] = gamma * istd * gdat[base + i];
                        }
                    }
                }
            }
        }
        Ok(grad_in)
    }
}
