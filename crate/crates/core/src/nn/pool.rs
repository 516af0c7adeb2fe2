//! Global average pooling.

use super::conv::dims4;
use crate::error::Result;
use crate::tensor::{lit, Scalar, Tensor};

/// `[N, C, H, W]` → `[N, C]`, averaging over the spatial dims.
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = dims4(input, "pool input")?;
    let plane = h * w;
    let norm = lit::<T>(plane as f64);
    let mut out = Tensor::zeros(&[n, c]);
    let idat = input.data();
    let odat = out.data_mut();
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * plane;
            let mut sum = T::zero();
            for i in 0..plane {
                sum = sum + idat[base + i];
            }
            odat[b * c + ch] = sum / norm;
        }
    }
    Ok(out)
}

/// Backward of [`global_avg_pool`]: spreads each pooled gradient evenly
/// over its spatial positions.
pub fn global_avg_pool_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    h: usize,
    w: usize,
) -> Result<Tensor<T>> {
    let (n, c) = (grad_out.dim(0), grad_out.dim(1));
    let plane = h * w;
    let norm = lit::<T>(plane as f64);
    let mut grad_in = Tensor::zeros(&[n, c, h, w]);
    let gdat = grad_out.data();
    let gidat = grad_in.data_mut();
    for b in 0..n {
        for ch in 0..c {
            let g = gdat[b * c + ch] / norm;
            let base = (b * c + ch) * plane;
            for i in 0..plane {
                gidat[base + i] = g;
            }
        }
    }
    Ok(grad_in)
}
