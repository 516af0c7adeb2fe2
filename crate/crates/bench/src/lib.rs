//! Shared fixtures for the pipeline benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rawpipe_core::bayer::{BayerFrame, CfaPattern};
use rawpipe_core::tensor::Tensor;

/// Gradient-patterned RGGB mosaic of the given packed side length.
pub fn demo_frame(side: usize) -> BayerFrame {
    let (w, h) = (2 * side, 2 * side);
    let samples: Vec<u16> = (0..w * h)
        .map(|i| 512 + ((i * 97) % 15_000) as u16)
        .collect();
    BayerFrame::new(w, h, samples, CfaPattern::Rggb, 512, 16383).expect("valid fixture")
}

/// Uniform random `[n, c, side, side]` tensor in `[lo, hi)`.
pub fn random_tensor(seed: u64, n: usize, c: usize, side: usize, lo: f32, hi: f32) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f32> = (0..n * c * side * side).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(&[n, c, side, side], data).expect("valid fixture")
}
