//! Channel concatenation of 4-d feature maps and its backward split.

use super::conv::dims4;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Stack `a` and `b` along the channel axis; `a` occupies channels
/// `[0, Ca)` and `b` occupies `[Ca, Ca+Cb)`.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [na, ca, ha, wa] = dims4(a, "concat lhs")?;
    let [nb, cb, hb, wb] = dims4(b, "concat rhs")?;
    if (na, ha, wa) != (nb, hb, wb) {
        return Err(Error::Shape(format!(
            "concat needs matching batch/spatial dims: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let plane = ha * wa;
    let mut out = Tensor::zeros(&[na, ca + cb, ha, wa]);
    let odat = out.data_mut();
    for n in 0..na {
        let dst = n * (ca + cb) * plane;
        let src_a = n * ca * plane;
        odat[dst..dst + ca * plane].copy_from_slice(&a.data()[src_a..src_a + ca * plane]);
        let src_b = n * cb * plane;
        odat[dst + ca * plane..dst + (ca + cb) * plane]
            .copy_from_slice(&b.data()[src_b..src_b + cb * plane]);
    }
    Ok(out)
}

/// Backward of [`concat_channels`]: splits `grad` back into the two
/// channel groups `(grad[:, :ca], grad[:, ca:])`.
pub fn split_channels<T: Scalar>(grad: &Tensor<T>, ca: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let [n, c, h, w] = dims4(grad, "split input")?;
    if ca > c {
        return Err(Error::Shape(format!("cannot split {ca} channels from {c}")));
    }
    let cb = c - ca;
    let plane = h * w;
    let mut a = Tensor::zeros(&[n, ca, h, w]);
    let mut b = Tensor::zeros(&[n, cb, h, w]);
    for i in 0..n {
        let src = i * c * plane;
        let dst_a = i * ca * plane;
        a.data_mut()[dst_a..dst_a + ca * plane]
            .copy_from_slice(&grad.data()[src..src + ca * plane]);
        let dst_b = i * cb * plane;
        b.data_mut()[dst_b..dst_b + cb * plane]
            .copy_from_slice(&grad.data()[src + ca * plane..src + c * plane]);
    }
    Ok((a, b))
}
