//! RAW Bayer enhancement pipeline.
//!
//! The crate packs RGGB mosaics into normalized four-plane images, runs
//! them through a learnable per-channel gamma transform and a small
//! green-guided fusion network, and trains the whole stack end to end on
//! a synthetic detection-like task — all on CPU, with hand-rolled exact
//! gradients that are verified against a 64-bit finite-difference
//! reference path.

pub mod analysis;
pub mod bayer;
pub mod checkpoint;
pub mod error;
pub mod gge;
pub mod ggle;
pub mod gradcheck;
pub mod nn;
pub mod sensor;
pub mod surrogate;
pub mod tensor;
pub mod trainer;

pub use error::{Error, ErrorClass, Result};
pub use tensor::{ParamTensor, Scalar, Tensor};
