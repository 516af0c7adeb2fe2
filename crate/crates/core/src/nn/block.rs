//! Conv → batch norm → leaky rectifier block, the repeated unit of the
//! enhancement networks.

use rand::Rng;

use super::activation::{LeakyRelu, LeakyReluCache, LEAKY_SLOPE};
use super::batchnorm::{BatchNorm2d, BatchNormCache};
use super::conv::{Conv2d, KERNEL};
use super::init::he_normal;
use super::Mode;
use crate::error::Result;
use crate::tensor::{ParamTensor, Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct ConvBlock<T = f32> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
    pub act: LeakyRelu<T>,
}

#[derive(Debug)]
pub struct ConvBlockCache<T> {
    conv: super::conv::Conv2dCache<T>,
    bn: BatchNormCache<T>,
    act: LeakyReluCache,
}

impl ConvBlock<f32> {
    /// He-initialized conv weights, zero bias, identity batch norm.
    pub fn init(rng: &mut impl Rng, in_channels: usize, out_channels: usize) -> Self {
        let weight = he_normal(rng, &[out_channels, in_channels, KERNEL, KERNEL], LEAKY_SLOPE);
        let conv = Conv2d::new(weight, Tensor::zeros(&[out_channels]))
            .expect("init weight shape is valid");
        Self { conv, bn: BatchNorm2d::new(out_channels), act: LeakyRelu::default() }
    }
}

impl<T: Scalar> ConvBlock<T> {
    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, ConvBlockCache<T>)> {
        let (c, conv_cache) = self.conv.forward(input)?;
        let (b, bn_cache) = self.bn.forward(&c, mode)?;
        let (a, act_cache) = self.act.forward(&b);
        Ok((a, ConvBlockCache { conv: conv_cache, bn: bn_cache, act: act_cache }))
    }

    pub fn backward(&mut self, cache: ConvBlockCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.act.backward(cache.act, grad_out)?;
        let g = self.bn.backward(cache.bn, &g)?;
        self.conv.backward(cache.conv, &g)
    }

    pub fn param_count(&self) -> usize {
        self.conv.param_count() + self.bn.param_count()
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        let mut out: Vec<&mut ParamTensor<T>> = Vec::with_capacity(4);
        out.extend(self.conv.params_mut());
        out.extend(self.bn.params_mut());
        out
    }

    /// Learnable parameters with stable dotted names under `prefix`.
    pub fn named_params_mut(&mut self, prefix: &str) -> Vec<(String, &mut ParamTensor<T>)> {
        let [w, b] = self.conv.params_mut();
        let mut out: Vec<(String, &mut ParamTensor<T>)> = vec![
            (format!("{prefix}.conv.weight"), w),
            (format!("{prefix}.conv.bias"), b),
        ];
        let [s, sh] = self.bn.params_mut();
        out.push((format!("{prefix}.bn.scale"), s));
        out.push((format!("{prefix}.bn.shift"), sh));
        out
    }

    /// All persistent tensors (parameters plus batch-norm running stats),
    /// in checkpoint order.
    pub fn named_state(&self, prefix: &str) -> Vec<(String, &Tensor<T>)> {
        vec![
            (format!("{prefix}.conv.weight"), &self.conv.weight.value),
            (format!("{prefix}.conv.bias"), &self.conv.bias.value),
            (format!("{prefix}.bn.scale"), &self.bn.scale.value),
            (format!("{prefix}.bn.shift"), &self.bn.shift.value),
            (format!("{prefix}.bn.running_mean"), &self.bn.running_mean),
            (format!("{prefix}.bn.running_var"), &self.bn.running_var),
        ]
    }

    pub fn named_state_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor<T>)> {
        vec![
            (format!("{prefix}.conv.weight"), &mut self.conv.weight.value),
            (format!("{prefix}.conv.bias"), &mut self.conv.bias.value),
            (format!("{prefix}.bn.scale"), &mut self.bn.scale.value),
            (format!("{prefix}.bn.shift"), &mut self.bn.shift.value),
            (format!("{prefix}.bn.running_mean"), &mut self.bn.running_mean),
            (format!("{prefix}.bn.running_var"), &mut self.bn.running_var),
        ]
    }

    pub fn cast<U: Scalar>(&self) -> ConvBlock<U> {
        ConvBlock { conv: self.conv.cast(), bn: self.bn.cast(), act: self.act.cast() }
    }
}
