//! Dense tensor storage, parameter/gradient pairs, and the `RTEN`
//! on-disk container.
//!
//! Production math runs at `f32`; every kernel is generic over [`Scalar`]
//! so the finite-difference reference path can evaluate the identical
//! code at `f64`.

use std::io::{Read, Write};
use std::path::Path;

use num_traits::Float;

use crate::error::{Error, Result};

/// Element type for tensor math.
pub trait Scalar:
    Float + num_traits::FromPrimitive + std::fmt::Debug + Default + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Cast a literal into the active scalar type.
pub(crate) fn lit<T: Scalar>(v: f64) -> T {
    T::from(v).expect("finite literal representable in scalar type")
}

/// Row-major dense tensor. Image tensors use `[batch, channels, height, width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// Build a tensor, checking that the buffer length matches the shape.
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} wants {} elements, buffer has {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![T::zero(); len] }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; len] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "add: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "add_assign: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Convert element type (f32 ↔ f64).
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&v| U::from(v).expect("float-to-float cast"))
                .collect(),
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    /// True when every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Learnable tensor with an accumulated gradient slot of identical shape.
///
/// Gradients accumulate across backward calls; the optimizer zeroes them
/// after each step.
#[derive(Debug, Clone)]
pub struct ParamTensor<T = f32> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> ParamTensor<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn cast<U: Scalar>(&self) -> ParamTensor<U> {
        ParamTensor { value: self.value.cast(), grad: self.grad.cast() }
    }
}

// ── RTEN container ─────────────────────────────────────────────────
//
// magic "RTEN" | version u8 = 1 | dtype u8 = 0 (f32) | ndim u8 |
// 3 zero bytes | ndim × u64 LE dims | f32 LE payload.

pub const RTEN_MAGIC: [u8; 4] = *b"RTEN";
pub const RTEN_VERSION: u8 = 1;
pub const RTEN_DTYPE_F32: u8 = 0;

impl Tensor<f32> {
    pub fn to_rten_bytes(&self) -> Result<Vec<u8>> {
        if self.shape.len() > u8::MAX as usize {
            return Err(Error::Shape(format!(
                "tensor rank {} exceeds container limit",
                self.shape.len()
            )));
        }
        let mut out = Vec::with_capacity(10 + 8 * self.shape.len() + 4 * self.data.len());
        out.extend_from_slice(&RTEN_MAGIC);
        out.push(RTEN_VERSION);
        out.push(RTEN_DTYPE_F32);
        out.push(self.shape.len() as u8);
        out.extend_from_slice(&[0u8; 3]);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_rten_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let mut header = [0u8; 10];
        read_exact(&mut cursor, &mut header, bytes.len())?;
        if header[0..4] != RTEN_MAGIC {
            return Err(Error::Parse("bad RTEN magic".into()));
        }
        if header[4] != RTEN_VERSION {
            return Err(Error::Parse(format!("unsupported RTEN version {}", header[4])));
        }
        if header[5] != RTEN_DTYPE_F32 {
            return Err(Error::Parse(format!("unsupported RTEN dtype {}", header[5])));
        }
        let ndim = header[6] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut raw = [0u8; 8];
            read_exact(&mut cursor, &mut raw, bytes.len())?;
            shape.push(u64::from_le_bytes(raw) as usize);
        }
        let count: usize = shape.iter().product();
        let expected = count * 4;
        if cursor.len() != expected {
            return Err(Error::Truncated { expected, actual: cursor.len() });
        }
        let mut data = Vec::with_capacity(count);
        for chunk in cursor.chunks_exact(4) {
            data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
        }
        Tensor::from_vec(&shape, data)
    }

    pub fn write_rten(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_rten_bytes()?;
        let mut file = std::fs::File::create(path)?;
        file.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_rten(path: impl AsRef<Path>) -> Result<Self> {
        let mut file = std::fs::File::open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        Self::from_rten_bytes(&bytes)
    }
}

fn read_exact(cursor: &mut &[u8], buf: &mut [u8], total: usize) -> Result<()> {
    if cursor.len() < buf.len() {
        return Err(Error::Truncated { expected: total + buf.len() - cursor.len(), actual: total });
    }
    buf.copy_from_slice(&cursor[..buf.len()]);
    *cursor = &cursor[buf.len()..];
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_length_mismatch() {
        let err = Tensor::from_vec(&[2, 3], vec![0.0f32; 5]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn rten_roundtrip() {
        let t = Tensor::from_vec(&[2, 1, 3], vec![1.0f32, -2.5, 3.25, 0.0, 7.0, -0.125]).unwrap();
        let bytes = t.to_rten_bytes().unwrap();
        assert_eq!(&bytes[0..4], b"RTEN");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 0);
        assert_eq!(bytes[6], 3);
        assert_eq!(&bytes[7..10], &[0, 0, 0]);
        let back = Tensor::from_rten_bytes(&bytes).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rten_rejects_bad_magic_and_truncation() {
        let t = Tensor::from_vec(&[4], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let mut bytes = t.to_rten_bytes().unwrap();
        let truncated = &bytes[..bytes.len() - 2];
        assert!(matches!(
            Tensor::from_rten_bytes(truncated).unwrap_err(),
            Error::Truncated { .. }
        ));
        bytes[0] = b'X';
        assert!(matches!(Tensor::from_rten_bytes(&bytes).unwrap_err(), Error::Parse(_)));
    }

    #[test]
    fn cast_roundtrips_f32_values() {
        let t = Tensor::from_vec(&[3], vec![0.1f32, -2.0, 1e-6]).unwrap();
        let back: Tensor<f32> = t.cast::<f64>().cast();
        assert_eq!(back, t);
    }

    #[test]
    fn tensors_are_transferable_between_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<Tensor<f32>>();
        assert_send_sync::<Tensor<f64>>();
        assert_send_sync::<ParamTensor<f32>>();
    }

    #[test]
    fn param_tensor_grad_matches_shape() {
        let mut p = ParamTensor::<f32>::zeros(&[2, 2]);
        assert_eq!(p.value.shape(), p.grad.shape());
        p.grad.data_mut()[0] = 3.0;
        p.zero_grad();
        assert_eq!(p.grad.data(), &[0.0; 4]);
    }
}
