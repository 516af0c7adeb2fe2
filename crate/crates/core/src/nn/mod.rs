//! Layer primitives: each forward pass returns its output plus a cache,
//! and the matching backward pass consumes that cache to produce exact
//! gradients for the computed function.
//!
//! Convolutions are fixed at 3×3, stride 1, zero pad 1, which preserves
//! spatial size so feature maps can be added and concatenated freely.

mod activation;
mod batchnorm;
mod block;
mod concat;
mod conv;
mod init;
mod linear;
mod pool;

pub(crate) use conv::dims4;

pub use activation::{LeakyRelu, LeakyReluCache, LEAKY_SLOPE};
pub use batchnorm::{BatchNorm2d, BatchNormCache, BN_EPS, BN_MOMENTUM};
pub use block::{ConvBlock, ConvBlockCache};
pub use concat::{concat_channels, split_channels};
pub use conv::{Conv2d, Conv2dCache};
pub use init::he_normal;
pub use linear::{Linear, LinearCache};
pub use pool::{global_avg_pool, global_avg_pool_backward};

/// Whether normalization statistics come from the current batch (train)
/// or from running estimates (eval).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
