//! Leaky rectifier.

use crate::error::{Error, Result};
use crate::tensor::{lit, Scalar, Tensor};

/// Negative-branch slope shared by every activation in the pipeline.
pub const LEAKY_SLOPE: f64 = 0.1;

/// `f(x) = x` for `x ≥ 0`, `slope·x` otherwise. The subgradient at 0 is 1.
#[derive(Debug, Clone)]
pub struct LeakyRelu<T = f32> {
    pub slope: T,
}

#[derive(Debug)]
pub struct LeakyReluCache {
    non_negative: Vec<bool>,
}

impl LeakyReluCache {
    /// Branch decisions of the forward pass (`true` = pass-through).
    pub fn non_negative(&self) -> &[bool] {
        &self.non_negative
    }
}

impl<T: Scalar> Default for LeakyRelu<T> {
    fn default() -> Self {
        Self { slope: lit(LEAKY_SLOPE) }
    }
}

impl<T: Scalar> LeakyRelu<T> {
    pub fn cast<U: Scalar>(&self) -> LeakyRelu<U> {
        LeakyRelu { slope: U::from(self.slope).expect("slope cast") }
    }

    pub fn forward(&self, input: &Tensor<T>) -> (Tensor<T>, LeakyReluCache) {
        let non_negative: Vec<bool> = input.data().iter().map(|&v| v >= T::zero()).collect();
        let out = input.map(|v| if v >= T::zero() { v } else { self.slope * v });
        (out, LeakyReluCache { non_negative })
    }

    /// Apply with externally fixed branch decisions instead of the input
    /// signs. Used by the finite-difference oracle so a perturbation
    /// cannot step across the kink mid-quotient.
    pub fn apply_mask(&self, input: &Tensor<T>, non_negative: &[bool]) -> Result<Tensor<T>> {
        if non_negative.len() != input.len() {
            return Err(Error::Shape(format!(
                "mask has {} entries, input has {}",
                non_negative.len(),
                input.len()
            )));
        }
        let data = input
            .data()
            .iter()
            .zip(non_negative)
            .map(|(&v, &nn)| if nn { v } else { self.slope * v })
            .collect();
        Tensor::from_vec(input.shape(), data)
    }

    pub fn backward(&self, cache: LeakyReluCache, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        if cache.non_negative.len() != grad_out.len() {
            return Err(Error::Shape(format!(
                "leaky_relu grad_out has {} elements, cache has {}",
                grad_out.len(),
                cache.non_negative.len()
            )));
        }
        let data = grad_out
            .data()
            .iter()
            .zip(&cache.non_negative)
            .map(|(&g, &nn)| if nn { g } else { self.slope * g })
            .collect();
        Tensor::from_vec(grad_out.shape(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_values_pass_through() {
        let act = LeakyRelu::<f32>::default();
        let (out, _) = act.forward(&Tensor::filled(&[1], 2.0));
        assert_eq!(out.data()[0], 2.0);
    }

    #[test]
    fn negative_values_are_scaled_by_slope() {
        let act = LeakyRelu::<f32>::default();
        let (out, _) = act.forward(&Tensor::filled(&[1], -2.0));
        assert!((out.data()[0] + 0.2).abs() < 1e-7);
    }

    #[test]
    fn derivative_on_negative_branch_is_slope() {
        let act = LeakyRelu::<f32>::default();
        let (_, cache) = act.forward(&Tensor::filled(&[1], -1.0));
        let grad = act.backward(cache, &Tensor::filled(&[1], 1.0)).unwrap();
        assert!((grad.data()[0] - 0.1).abs() < 1e-7);
    }

    #[test]
    fn subgradient_at_zero_is_one() {
        let act = LeakyRelu::<f32>::default();
        let (_, cache) = act.forward(&Tensor::filled(&[1], 0.0));
        let grad = act.backward(cache, &Tensor::filled(&[1], 1.0)).unwrap();
        assert_eq!(grad.data()[0], 1.0);
    }

    #[test]
    fn idempotent_on_non_negative_input() {
        let act = LeakyRelu::<f32>::default();
        let input = Tensor::from_vec(&[4], vec![0.0, 0.5, 1.0, 3.0]).unwrap();
        let (once, _) = act.forward(&input);
        let (twice, _) = act.forward(&once);
        assert_eq!(once, twice);
        assert_eq!(once, input);
    }
}
