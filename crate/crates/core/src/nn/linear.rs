//! Fully connected layer over `[N, In]` feature vectors.

use crate::error::{Error, Result};
use crate::tensor::{ParamTensor, Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct Linear<T = f32> {
    /// `[Out, In]`
    pub weight: ParamTensor<T>,
    /// `[Out]`
    pub bias: ParamTensor<T>,
}

#[derive(Debug)]
pub struct LinearCache<T> {
    input: Tensor<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.ndim() != 2 {
            return Err(Error::Shape(format!(
                "linear weight must be [out, in], got {:?}",
                weight.shape()
            )));
        }
        if bias.shape() != [weight.dim(0)] {
            return Err(Error::Shape(format!(
                "linear bias must be [{}], got {:?}",
                weight.dim(0),
                bias.shape()
            )));
        }
        Ok(Self { weight: ParamTensor::new(weight), bias: ParamTensor::new(bias) })
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.dim(1)
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.dim(0)
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn params_mut(&mut self) -> [&mut ParamTensor<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn cast<U: Scalar>(&self) -> Linear<U> {
        Linear { weight: self.weight.cast(), bias: self.bias.cast() }
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, LinearCache<T>)> {
        if input.ndim() != 2 || input.dim(1) != self.in_features() {
            return Err(Error::Shape(format!(
                "linear expects [N, {}], got {:?}",
                self.in_features(),
                input.shape()
            )));
        }
        let (n, fin, fout) = (input.dim(0), self.in_features(), self.out_features());
        let mut out = Tensor::zeros(&[n, fout]);
        let idat = input.data();
        let wdat = self.weight.value.data();
        let bdat = self.bias.value.data();
        let odat = out.data_mut();
        for b in 0..n {
            for o in 0..fout {
                let mut acc = bdat[o];
                for i in 0..fin {
                    acc = acc + wdat[o * fin + i] * idat[b * fin + i];
                }
                odat[b * fout + o] = acc;
            }
        }
        Ok((out, LinearCache { input: input.clone() }))
    }

    pub fn backward(&mut self, cache: LinearCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let input = &cache.input;
        let (n, fin, fout) = (input.dim(0), self.in_features(), self.out_features());
        if grad_out.shape() != [n, fout] {
            return Err(Error::Shape(format!(
                "linear grad_out must be {:?}, got {:?}",
                [n, fout],
                grad_out.shape()
            )));
        }
        let mut grad_in = Tensor::zeros(input.shape());
        let idat = input.data();
        let gdat = grad_out.data();
        let wdat = self.weight.value.data().to_vec();
        let gw = self.weight.grad.data_mut();
        let gb = self.bias.grad.data_mut();
        let gidat = grad_in.data_mut();
        for b in 0..n {
            for o in 0..fout {
                let g = gdat[b * fout + o];
                gb[o] = gb[o] + g;
                for i in 0..fin {
                    gw[o * fin + i] = gw[o * fin + i] + g * idat[b * fin + i];
                    gidat[b * fin + i] = gidat[b * fin + i] + g * wdat[o * fin + i];
                }
            }
        }
        Ok(grad_in)
    }
}
