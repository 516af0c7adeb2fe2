//! Weight initialization.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::Tensor;

/// Fan-in-scaled zero-mean normal init with the gain matched to a leaky
/// rectifier: `std = sqrt(2 / (1 + slope²)) / sqrt(fan_in)`.
///
/// `fan_in` is the product of all non-leading dims (`Cin·k·k` for conv
/// weights, `In` for linear weights).
pub fn he_normal(rng: &mut impl Rng, shape: &[usize], negative_slope: f64) -> Tensor<f32> {
    let fan_in: usize = shape[1..].iter().product();
    let gain = (2.0 / (1.0 + negative_slope * negative_slope)).sqrt();
    let std = gain / (fan_in as f64).sqrt();
    let len: usize = shape.iter().product();
    let data: Vec<f32> = (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            (z * std) as f32
        })
        .collect();
    Tensor::from_vec(shape, data).expect("init shape consistent")
}
