//! 3×3 convolution (cross-correlation) with zero padding 1 and stride 1.

use crate::error::{Error, Result};
use crate::tensor::{ParamTensor, Scalar, Tensor};

pub const KERNEL: usize = 3;
const PAD: usize = 1;

/// Convolution layer over `[N, Cin, H, W]` inputs producing `[N, Cout, H, W]`.
#[derive(Debug, Clone)]
pub struct Conv2d<T = f32> {
    /// `[Cout, Cin, 3, 3]`
    pub weight: ParamTensor<T>,
    /// `[Cout]`
    pub bias: ParamTensor<T>,
}

/// Saved forward state: the input activations.
#[derive(Debug)]
pub struct Conv2dCache<T> {
    input: Tensor<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.ndim() != 4 || weight.dim(2) != KERNEL || weight.dim(3) != KERNEL {
            return Err(Error::Shape(format!(
                "conv weight must be [out, in, 3, 3], got {:?}",
                weight.shape()
            )));
        }
        if bias.shape() != [weight.dim(0)] {
            return Err(Error::Shape(format!(
                "conv bias must be [{}], got {:?}",
                weight.dim(0),
                bias.shape()
            )));
        }
        Ok(Self { weight: ParamTensor::new(weight), bias: ParamTensor::new(bias) })
    }

    pub fn zeros(out_channels: usize, in_channels: usize) -> Self {
        Self {
            weight: ParamTensor::zeros(&[out_channels, in_channels, KERNEL, KERNEL]),
            bias: ParamTensor::zeros(&[out_channels]),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.dim(1)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn params_mut(&mut self) -> [&mut ParamTensor<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn cast<U: Scalar>(&self) -> Conv2d<U> {
        Conv2d { weight: self.weight.cast(), bias: self.bias.cast() }
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Conv2dCache<T>)> {
        let [n, cin, h, w] = dims4(input, "conv input")?;
        if cin != self.in_channels() {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels(),
                cin
            )));
        }
        let cout = self.out_channels();
        let mut out = Tensor::zeros(&[n, cout, h, w]);
        let wdat = self.weight.value.data();
        let bdat = self.bias.value.data();
        let idat = input.data();
        let odat = out.data_mut();
        for b in 0..n {
            for (co, &bias) in bdat.iter().enumerate() {
                let out_base = ((b * cout + co) * h) * w;
                for y in 0..h {
                    for x in 0..w {
                        let mut acc = bias;
                        for ci in 0..cin {
                            let in_base = ((b * cin + ci) * h) * w;
                            let w_base = ((co * cin + ci) * KERNEL) * KERNEL;
                            for ky in 0..KERNEL {
                                let iy = y + ky;
                                if iy < PAD || iy >= h + PAD {
                                    continue;
                                }
                                let iy = iy - PAD;
                                for kx in 0..KERNEL {
                                    let ix = x + kx;
                                    if ix < PAD || ix >= w + PAD {
                                        continue;
                                    }
                                    let ix = ix - PAD;
                                    acc = acc
                                        + wdat[w_base + ky * KERNEL + kx]
                                            * idat[in_base + iy * w + ix];
                                }
                            }
                        }
                        odat[out_base + y * w + x] = acc;
                    }
                }
            }
        }
        Ok((out, Conv2dCache { input: input.clone() }))
    }

    /// Propagates `grad_out` to the input and accumulates weight/bias
    /// gradients. Loop order is fixed so accumulation is bit-reproducible.
    pub fn backward(&mut self, cache: Conv2dCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let input = &cache.input;
        let [n, cin, h, w] = dims4(input, "conv cached input")?;
        let cout = self.out_channels();
        if grad_out.shape() != [n, cout, h, w] {
            return Err(Error::Shape(format!(
                "conv grad_out must be {:?}, got {:?}",
                [n, cout, h, w],
                grad_out.shape()
            )));
        }
        let mut grad_in = Tensor::zeros(input.shape());
        let wdat = self.weight.value.data().to_vec();
        let gw = self.weight.grad.data_mut();
        let gb = self.bias.grad.data_mut();
        let idat = input.data();
        let gdat = grad_out.data();
        let gidat = grad_in.data_mut();
        for b in 0..n {
            for (co, gb_slot) in gb.iter_mut().enumerate() {
                let out_base = ((b * cout + co) * h) * w;
                for y in 0..h {
                    for x in 0..w {
                        let g = gdat[out_base + y * w + x];
                        *gb_slot = *gb_slot + g;
                        for ci in 0..cin {
                            let in_base = ((b * cin + ci) * h) * w;
                            let w_base = ((co * cin + ci) * KERNEL) * KERNEL;
                            for ky in 0..KERNEL {
                                let iy = y + ky;
                                if iy < PAD || iy >= h + PAD {
                                    continue;
                                }
                                let iy = iy - PAD;
                                for kx in 0..KERNEL {
                                    let ix = x + kx;
                                    if ix < PAD || ix >= w + PAD {
                                        continue;
                                    }
                                    let ix = ix - PAD;
                                    let wi = w_base + ky * KERNEL + kx;
                                    let ii = in_base + iy * w + ix;
                                    gw[wi] = gw[wi] + g * idat[ii];
                                    gidat[ii] = gidat[ii] + g * wdat[wi];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(grad_in)
    }
}

pub(crate) fn dims4<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<[usize; 4]> {
    if t.ndim() != 4 {
        return Err(Error::Shape(format!("{what} must be 4-d, got {:?}", t.shape())));
    }
    Ok([t.dim(0), t.dim(1), t.dim(2), t.dim(3)])
}
