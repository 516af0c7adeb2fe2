//! Green-guided local enhancement.
//!
//! Two branches over the gamma-transformed planes: a main branch that
//! sees all four planes through two conv blocks, and a guidance branch
//! that re-reads a configurable subset of planes through one conv block.
//! The branch outputs are added, concatenated with the main features,
//! and fused by a linear 3×3 conv into a three-channel image:
//!
//! `out = Conv(Concat[F(x) + G(x_sel), F(x)])`

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    concat_channels, dims4, he_normal, split_channels, Conv2d, Conv2dCache, ConvBlock,
    ConvBlockCache, Mode,
};
use crate::tensor::{ParamTensor, Scalar, Tensor};

/// Feature width of both branches; their outputs are added, so the
/// widths must agree.
pub const FEATURE_CHANNELS: usize = 8;
/// Output channels of the fused image.
pub const OUTPUT_CHANNELS: usize = 3;

/// Which packed planes feed the guidance branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GuidanceMode {
    /// Guidance branch disabled; the fusion sees `Concat[F(x), F(x)]`.
    None,
    R,
    B,
    #[serde(rename = "RB")]
    Rb,
    /// Both green planes — the reference configuration.
    #[serde(rename = "GG")]
    Gg,
    #[serde(rename = "RGGB")]
    Rggb,
}

impl GuidanceMode {
    pub const ALL: [GuidanceMode; 6] = [
        GuidanceMode::None,
        GuidanceMode::R,
        GuidanceMode::B,
        GuidanceMode::Rb,
        GuidanceMode::Gg,
        GuidanceMode::Rggb,
    ];

    /// Packed plane indices routed into the guidance branch.
    pub fn planes(self) -> &'static [usize] {
        match self {
            GuidanceMode::None => &[],
            GuidanceMode::R => &[0],
            GuidanceMode::B => &[3],
            GuidanceMode::Rb => &[0, 3],
            GuidanceMode::Gg => &[1, 2],
            GuidanceMode::Rggb => &[0, 1, 2, 3],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GuidanceMode::None => "None",
            GuidanceMode::R => "R",
            GuidanceMode::B => "B",
            GuidanceMode::Rb => "RB",
            GuidanceMode::Gg => "GG",
            GuidanceMode::Rggb => "RGGB",
        }
    }
}

impl fmt::Display for GuidanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GuidanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GuidanceMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown guidance mode {s:?} (expected one of None, R, B, RB, GG, RGGB)"
                ))
            })
    }
}

/// Weights of the fusion network.
#[derive(Debug, Clone)]
pub struct GgleWeights<T = f32> {
    pub mode: GuidanceMode,
    /// Main branch: conv 4→8 and conv 8→8 blocks.
    pub f_l: [ConvBlock<T>; 2],
    /// Guidance branch: one conv k→8 block, absent in `None` mode.
    pub guidance: Option<ConvBlock<T>>,
    /// Linear 3×3 fusion conv, 16→3.
    pub fusion: Conv2d<T>,
}

#[derive(Debug)]
pub struct GgleCache<T> {
    f_l0: ConvBlockCache<T>,
    f_l1: ConvBlockCache<T>,
    guidance: Option<ConvBlockCache<T>>,
    fusion: Conv2dCache<T>,
    input_shape: Vec<usize>,
}

impl GgleWeights<f32> {
    /// Deterministic fan-in-scaled init. Block weights use the leaky
    /// gain; the linear fusion conv uses unit gain.
    pub fn init(mode: GuidanceMode, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f_l = [
            ConvBlock::init(&mut rng, 4, FEATURE_CHANNELS),
            ConvBlock::init(&mut rng, FEATURE_CHANNELS, FEATURE_CHANNELS),
        ];
        let guidance = if mode.planes().is_empty() {
            None
        } else {
            Some(ConvBlock::init(&mut rng, mode.planes().len(), FEATURE_CHANNELS))
        };
        let fusion_weight =
            he_normal(&mut rng, &[OUTPUT_CHANNELS, 2 * FEATURE_CHANNELS, 3, 3], 1.0);
        let fusion = Conv2d::new(fusion_weight, Tensor::zeros(&[OUTPUT_CHANNELS]))
            .expect("fusion init shape");
        Self { mode, f_l, guidance, fusion }
    }
}

impl<T: Scalar> GgleWeights<T> {
    /// Learnable parameters only; batch-norm running statistics are
    /// excluded.
    pub fn param_count(&self) -> usize {
        self.f_l[0].param_count()
            + self.f_l[1].param_count()
            + self.guidance.as_ref().map_or(0, |g| g.param_count())
            + self.fusion.param_count()
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut ParamTensor<T>)> {
        let [fl0, fl1] = &mut self.f_l;
        let mut out = fl0.named_params_mut("ggle.f_l.0");
        out.extend(fl1.named_params_mut("ggle.f_l.1"));
        if let Some(g) = self.guidance.as_mut() {
            out.extend(g.named_params_mut("ggle.guidance"));
        }
        let [w, b] = self.fusion.params_mut();
        out.push(("ggle.fusion.weight".to_string(), w));
        out.push(("ggle.fusion.bias".to_string(), b));
        out
    }

    /// Same parameters and order as [`Self::named_params_mut`], without
    /// the name allocation.
    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        let [fl0, fl1] = &mut self.f_l;
        let mut out = fl0.params_mut();
        out.extend(fl1.params_mut());
        if let Some(g) = self.guidance.as_mut() {
            out.extend(g.params_mut());
        }
        out.extend(self.fusion.params_mut());
        out
    }

    pub fn named_state(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = self.f_l[0].named_state("ggle.f_l.0");
        out.extend(self.f_l[1].named_state("ggle.f_l.1"));
        if let Some(g) = self.guidance.as_ref() {
            out.extend(g.named_state("ggle.guidance"));
        }
        out.push(("ggle.fusion.weight".to_string(), &self.fusion.weight.value));
        out.push(("ggle.fusion.bias".to_string(), &self.fusion.bias.value));
        out
    }

    pub fn named_state_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let [fl0, fl1] = &mut self.f_l;
        let mut out = fl0.named_state_mut("ggle.f_l.0");
        out.extend(fl1.named_state_mut("ggle.f_l.1"));
        if let Some(g) = self.guidance.as_mut() {
            out.extend(g.named_state_mut("ggle.guidance"));
        }
        out.push(("ggle.fusion.weight".to_string(), &mut self.fusion.weight.value));
        out.push(("ggle.fusion.bias".to_string(), &mut self.fusion.bias.value));
        out
    }

    pub fn cast<U: Scalar>(&self) -> GgleWeights<U> {
        GgleWeights {
            mode: self.mode,
            f_l: [self.f_l[0].cast(), self.f_l[1].cast()],
            guidance: self.guidance.as_ref().map(|g| g.cast()),
            fusion: self.fusion.cast(),
        }
    }

    pub fn forward(&mut self, x_gamma: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, GgleCache<T>)> {
        let [_, c, h, w] = dims4(x_gamma, "fusion input")?;
        if c != 4 {
            return Err(Error::Shape(format!("fusion network expects 4 planes, got {c}")));
        }
        if h < 3 || w < 3 {
            return Err(Error::Shape(format!(
                "spatial size {h}x{w} is below the 3x3 kernel support"
            )));
        }
        let (a0, f_l0_cache) = self.f_l[0].forward(x_gamma, mode)?;
        let (main, f_l1_cache) = self.f_l[1].forward(&a0, mode)?;
        let (summed, guidance_cache) = match self.guidance.as_mut() {
            Some(block) => {
                let selected = select_planes(x_gamma, self.mode.planes())?;
                let (g, cache) = block.forward(&selected, mode)?;
                (main.add(&g)?, Some(cache))
            }
            None => (main.clone(), None),
        };
        let stacked = concat_channels(&summed, &main)?;
        let (out, fusion_cache) = self.fusion.forward(&stacked)?;
        let cache = GgleCache {
            f_l0: f_l0_cache,
            f_l1: f_l1_cache,
            guidance: guidance_cache,
            fusion: fusion_cache,
            input_shape: x_gamma.shape().to_vec(),
        };
        Ok((out, cache))
    }

    /// Gradient w.r.t. the four input planes; selected guidance planes
    /// receive contributions from both branches.
    pub fn backward(&mut self, cache: GgleCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let d_stacked = self.fusion.backward(cache.fusion, grad_out)?;
        let (d_summed, d_main_direct) = split_channels(&d_stacked, FEATURE_CHANNELS)?;
        let mut d_guidance_input: Option<Tensor<T>> = None;
        if let (Some(block), Some(gcache)) = (self.guidance.as_mut(), cache.guidance) {
            d_guidance_input = Some(block.backward(gcache, &d_summed)?);
        }
        let mut d_main = d_summed;
        d_main.add_assign(&d_main_direct)?;
        let d_a0 = self.f_l[1].backward(cache.f_l1, &d_main)?;
        let mut d_input = self.f_l[0].backward(cache.f_l0, &d_a0)?;
        if let Some(d_sel) = d_guidance_input {
            scatter_planes(&d_sel, self.mode.planes(), &mut d_input)?;
        }
        debug_assert_eq!(d_input.shape(), &cache.input_shape[..]);
        Ok(d_input)
    }
}

/// Gather a subset of channels from a `[N, 4, H, W]` tensor.
pub fn select_planes<T: Scalar>(x: &Tensor<T>, planes: &[usize]) -> Result<Tensor<T>> {
    let [n, c, h, w] = dims4(x, "plane selection input")?;
    if let Some(&bad) = planes.iter().find(|&&p| p >= c) {
        return Err(Error::Shape(format!("plane index {bad} out of range for {c} planes")));
    }
    let plane = h * w;
    let k = planes.len();
    let mut out = Tensor::zeros(&[n, k, h, w]);
    let odat = out.data_mut();
    for b in 0..n {
        for (slot, &p) in planes.iter().enumerate() {
            let src = (b * c + p) * plane;
            let dst = (b * k + slot) * plane;
            odat[dst..dst + plane].copy_from_slice(&x.data()[src..src + plane]);
        }
    }
    Ok(out)
}

/// Backward of [`select_planes`]: accumulate the selected-plane gradient
/// back into the full four-plane gradient.
pub fn scatter_planes<T: Scalar>(
    grad_sel: &Tensor<T>,
    planes: &[usize],
    grad_full: &mut Tensor<T>,
) -> Result<()> {
    let [n, k, h, w] = dims4(grad_sel, "plane scatter input")?;
    let [n2, c, h2, w2] = dims4(grad_full, "plane scatter target")?;
    if k != planes.len() || n != n2 || h != h2 || w != w2 {
        return Err(Error::Shape(format!(
            "plane scatter mismatch: {:?} into {:?} via {planes:?}",
            grad_sel.shape(),
            grad_full.shape()
        )));
    }
    let plane = h * w;
    let gdat = grad_full.data_mut();
    for b in 0..n {
        for (slot, &p) in planes.iter().enumerate() {
            let src = (b * k + slot) * plane;
            let dst = (b * c + p) * plane;
            for i in 0..plane {
                gdat[dst + i] = gdat[dst + i] + grad_sel.data()[src + i];
            }
        }
    }
    Ok(())
}
