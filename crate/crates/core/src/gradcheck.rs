//! Finite-difference verification of the analytic gradients.
//!
//! Every layer is generic over the scalar type, so the production `f32`
//! pipeline can be instantiated verbatim at `f64`. The check runs on
//! that 64-bit reference path: analytic reverse-mode gradients against
//! central differences over every learnable parameter, where the
//! comparison floor is truncation error rather than single-precision
//! rounding (near-zero true gradients, e.g. conv biases feeding batch
//! norm, would otherwise drown in f32 cancellation noise). The relative
//! error is `|a − n| / max(|a|, |n|, 1e-8)`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gge::GammaParams;
use crate::ggle::{select_planes, GgleWeights, GuidanceMode};
use crate::nn::{concat_channels, global_avg_pool, ConvBlock, LeakyRelu, Mode};
use crate::surrogate::{total_loss, ToyHead};
use crate::tensor::{lit, ParamTensor, Scalar, Tensor};

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Maximum tolerated relative error between analytic and numeric grads.
pub const TOLERANCE: f64 = 1e-4;

/// Which slice of the stack to differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    /// Gamma transform alone, scalarized by a fixed random weighting.
    Gge,
    /// Fusion network alone.
    Ggle,
    /// Gamma transform feeding the fusion network.
    GgePlusGgle,
    /// Gamma, fusion, task head, and the joint loss.
    Full,
}

impl Pipeline {
    pub const ALL: [Pipeline; 4] =
        [Pipeline::Gge, Pipeline::Ggle, Pipeline::GgePlusGgle, Pipeline::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::Gge => "gge",
            Pipeline::Ggle => "ggle",
            Pipeline::GgePlusGgle => "gge+ggle",
            Pipeline::Full => "full",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown pipeline {s:?} (expected gge, ggle, gge+ggle, or full)"
                ))
            })
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub pipeline: Pipeline,
    pub seed: u64,
    pub step: f64,
    /// Scalar parameters whose partials were finite-differenced.
    pub params_checked: usize,
    /// Gate metric: worst per-parameter relative error, where each
    /// parameter tensor is compared as a vector (Euclidean norms in the
    /// relative-error formula).
    pub max_rel_error: f64,
    pub worst_param: String,
    /// Diagnostic: worst single-coordinate relative error. Dominated by
    /// h² truncation on near-zero partials, so it is reported but not
    /// gated.
    pub max_coordinate_error: f64,
    pub worst_coordinate: String,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// The same formula applied to the Euclidean norms of a whole parameter
/// tensor's gradient.
fn relative_error_of_norms(diff: f64, analytic: f64, numeric: f64) -> f64 {
    diff / analytic.max(numeric).max(1e-8)
}

/// The differentiable stages under test, at either precision.
struct Stack<T: Scalar> {
    gge: Option<GammaParams<T>>,
    ggle: Option<GgleWeights<T>>,
    head: Option<ToyHead<T>>,
}

/// Fixed input and scalarization for one check.
struct Probe<T: Scalar> {
    input: Tensor<T>,
    /// Weighted-sum scalarization for head-less pipelines.
    weights: Option<Tensor<T>>,
    label: bool,
    target: Option<[T; 2]>,
    lambda: T,
}

impl<T: Scalar> Probe<T> {
    fn cast<U: Scalar>(&self) -> Probe<U> {
        Probe {
            input: self.input.cast(),
            weights: self.weights.as_ref().map(|w| w.cast()),
            label: self.label,
            target: self.target.map(|t| {
                [U::from(t[0]).expect("target cast"), U::from(t[1]).expect("target cast")]
            }),
            lambda: U::from(self.lambda).expect("lambda cast"),
        }
    }
}

impl<T: Scalar> Stack<T> {
    fn cast<U: Scalar>(&self) -> Stack<U> {
        Stack {
            gge: self.gge.as_ref().map(|g| g.cast()),
            ggle: self.ggle.as_ref().map(|g| g.cast()),
            head: self.head.as_ref().map(|h| h.cast()),
        }
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut ParamTensor<T>)> {
        let mut out = Vec::new();
        if let Some(g) = self.gge.as_mut() {
            out.extend(g.named_params_mut());
        }
        if let Some(g) = self.ggle.as_mut() {
            out.extend(g.named_params_mut());
        }
        if let Some(h) = self.head.as_mut() {
            out.extend(h.named_params_mut());
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        let mut out = Vec::new();
        if let Some(g) = self.gge.as_mut() {
            out.push(&mut g.alpha);
        }
        if let Some(g) = self.ggle.as_mut() {
            out.extend(g.params_mut());
        }
        if let Some(h) = self.head.as_mut() {
            out.extend(h.params_mut());
        }
        out
    }

    /// Scalar loss of the active stages; with `backprop`, gradients are
    /// pushed back into every parameter slot.
    fn loss(&mut self, probe: &Probe<T>, backprop: bool) -> Result<T> {
        let mut x = probe.input.clone();
        let mut gge_cache = None;
        if let Some(g) = self.gge.as_ref() {
            let (y, c) = g.forward(&x)?;
            x = y;
            gge_cache = Some(c);
        }
        let mut ggle_cache = None;
        if let Some(g) = self.ggle.as_mut() {
            let (y, c) = g.forward(&x, Mode::Train)?;
            x = y;
            ggle_cache = Some(c);
        }
        let (loss, d_x) = match self.head.as_mut() {
            Some(head) => {
                let (out, cache) = head.forward(&x, Mode::Train)?;
                let logit = out.data()[0];
                let reg = [out.data()[1], out.data()[2]];
                let (loss, grad) =
                    total_loss(logit, reg, probe.label, probe.target, probe.lambda)?;
                if !backprop {
                    (loss, None)
                } else {
                    let d_out = Tensor::from_vec(
                        &[1, 3],
                        vec![grad.d_logit, grad.d_reg[0], grad.d_reg[1]],
                    )?;
                    (loss, Some(head.backward(cache, &d_out)?))
                }
            }
            None => {
                let w = probe.weights.as_ref().ok_or_else(|| {
                    Error::Config("head-less pipeline needs scalarization weights".into())
                })?;
                if w.shape() != x.shape() {
                    return Err(Error::Shape(format!(
                        "scalarization weights {:?} vs output {:?}",
                        w.shape(),
                        x.shape()
                    )));
                }
                let mut acc = T::zero();
                for (&wi, &xi) in w.data().iter().zip(x.data()) {
                    acc = acc + wi * xi;
                }
                (acc, backprop.then(|| w.clone()))
            }
        };
        if let Some(mut grad) = d_x {
            if let (Some(g), Some(cache)) = (self.ggle.as_mut(), ggle_cache) {
                grad = g.backward(cache, &grad)?;
            }
            if let (Some(g), Some(cache)) = (self.gge.as_mut(), gge_cache) {
                g.backward(cache, &grad)?;
            }
        }
        Ok(loss)
    }
}

/// Rectifier branch decisions recorded at the unperturbed point and
/// replayed under perturbation.
///
/// A 1e-3 parameter step routinely pushes some BN-standardized
/// pre-activation across the leaky kink; the difference quotient would
/// then mix the slopes of two branches and bear no relation to the
/// (sub)gradient the analytic pass computes at the point itself. All
/// smooth stages are fully re-evaluated under perturbation.
enum MaskTape<'a> {
    Record(&'a mut Vec<Vec<bool>>),
    Replay { masks: &'a [Vec<bool>], next: usize },
}

impl MaskTape<'_> {
    fn leaky(&mut self, act: &LeakyRelu<f64>, input: &Tensor<f64>) -> Result<Tensor<f64>> {
        match self {
            MaskTape::Record(bank) => {
                let (out, cache) = act.forward(input);
                bank.push(cache.non_negative().to_vec());
                Ok(out)
            }
            MaskTape::Replay { masks, next } => {
                let mask = masks.get(*next).ok_or_else(|| {
                    Error::Config("mask tape exhausted during replay".into())
                })?;
                *next += 1;
                let out = act.apply_mask(input, mask)?;
                Ok(out)
            }
        }
    }
}

fn oracle_block(
    block: &mut ConvBlock<f64>,
    input: &Tensor<f64>,
    tape: &mut MaskTape<'_>,
) -> Result<Tensor<f64>> {
    let (convolved, _) = block.conv.forward(input)?;
    let (normalized, _) = block.bn.forward(&convolved, Mode::Train)?;
    tape.leaky(&block.act, &normalized)
}

/// Forward pass of the active stages, composed from the layer
/// primitives independently of the production forward methods.
fn oracle_forward(
    stack: &mut Stack<f64>,
    probe: &Probe<f64>,
    tape: &mut MaskTape<'_>,
) -> Result<f64> {
    let mut x = probe.input.clone();
    if let Some(g) = stack.gge.as_ref() {
        x = g.forward(&x)?.0;
    }
    if let Some(g) = stack.ggle.as_mut() {
        let planes = g.mode.planes();
        let [fl0, fl1] = &mut g.f_l;
        let a0 = oracle_block(fl0, &x, tape)?;
        let main = oracle_block(fl1, &a0, tape)?;
        let summed = match g.guidance.as_mut() {
            Some(gb) => {
                let selected = select_planes(&x, planes)?;
                main.add(&oracle_block(gb, &selected, tape)?)?
            }
            None => main.clone(),
        };
        let stacked = concat_channels(&summed, &main)?;
        x = g.fusion.forward(&stacked)?.0;
    }
    match stack.head.as_mut() {
        Some(head) => {
            let features = oracle_block(&mut head.block, &x, tape)?;
            let pooled = global_avg_pool(&features)?;
            let (out, _) = head.fc.forward(&pooled)?;
            let (loss, _) = total_loss(
                out.data()[0],
                [out.data()[1], out.data()[2]],
                probe.label,
                probe.target,
                probe.lambda,
            )?;
            Ok(loss)
        }
        None => {
            let w = probe.weights.as_ref().ok_or_else(|| {
                Error::Config("head-less pipeline needs scalarization weights".into())
            })?;
            if w.shape() != x.shape() {
                return Err(Error::Shape(format!(
                    "scalarization weights {:?} vs output {:?}",
                    w.shape(),
                    x.shape()
                )));
            }
            let mut acc = 0.0;
            for (&wi, &xi) in w.data().iter().zip(x.data()) {
                acc += wi * xi;
            }
            Ok(acc)
        }
    }
}

/// Deterministic test rig for one (pipeline, seed) pair: random 8×8
/// input, random weights, and a synthetic loss target.
fn build_rig(pipeline: Pipeline, seed: u64) -> Result<(Stack<f32>, Probe<f32>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (8usize, 8usize);
    let packed_input = |rng: &mut ChaCha8Rng| {
        let data: Vec<f32> = (0..4 * h * w).map(|_| rng.random_range(0.05..0.95)).collect();
        Tensor::from_vec(&[1, 4, h, w], data)
    };
    let gamma_input = |rng: &mut ChaCha8Rng| {
        let data: Vec<f32> = (0..4 * h * w).map(|_| rng.random_range(0.0..255.0)).collect();
        Tensor::from_vec(&[1, 4, h, w], data)
    };
    // mean-scaled weighting keeps the scalar loss O(1), so the f64
    // rounding of the difference quotient stays below the error floor
    let scalarize = |rng: &mut ChaCha8Rng, shape: &[usize]| {
        let len: usize = shape.iter().product();
        let scale = 1.0 / len as f32;
        let data: Vec<f32> =
            (0..len).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
        Tensor::from_vec(shape, data)
    };
    let random_gge = |rng: &mut ChaCha8Rng| -> Result<GammaParams<f32>> {
        let mut gge = GammaParams::with_defaults();
        for a in gge.alpha.value.data_mut() {
            *a = rng.random_range(-1.0..1.0);
        }
        Ok(gge)
    };
    match pipeline {
        Pipeline::Gge => {
            let input = packed_input(&mut rng)?;
            let weights = scalarize(&mut rng, &[1, 4, h, w])?;
            let stack = Stack { gge: Some(random_gge(&mut rng)?), ggle: None, head: None };
            let probe = Probe {
                input,
                weights: Some(weights),
                label: false,
                target: None,
                lambda: lit(crate::surrogate::DEFAULT_LAMBDA),
            };
            Ok((stack, probe))
        }
        Pipeline::Ggle => {
            let input = gamma_input(&mut rng)?;
            let weights = scalarize(&mut rng, &[1, 3, h, w])?;
            let ggle = GgleWeights::init(GuidanceMode::Gg, rng.next_u64());
            let stack = Stack { gge: None, ggle: Some(ggle), head: None };
            let probe = Probe {
                input,
                weights: Some(weights),
                label: false,
                target: None,
                lambda: lit(crate::surrogate::DEFAULT_LAMBDA),
            };
            Ok((stack, probe))
        }
        Pipeline::GgePlusGgle => {
            let input = packed_input(&mut rng)?;
            let weights = scalarize(&mut rng, &[1, 3, h, w])?;
            let gge = random_gge(&mut rng)?;
            let ggle = GgleWeights::init(GuidanceMode::Gg, rng.next_u64());
            let stack = Stack { gge: Some(gge), ggle: Some(ggle), head: None };
            let probe = Probe {
                input,
                weights: Some(weights),
                label: false,
                target: None,
                lambda: lit(crate::surrogate::DEFAULT_LAMBDA),
            };
            Ok((stack, probe))
        }
        Pipeline::Full => {
            let input = packed_input(&mut rng)?;
            let gge = random_gge(&mut rng)?;
            let ggle = GgleWeights::init(GuidanceMode::Gg, rng.next_u64());
            let head = ToyHead::init(rng.next_u64());
            let label = rng.random::<bool>();
            let target = label
                .then(|| [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)]);
            let stack = Stack { gge: Some(gge), ggle: Some(ggle), head: Some(head) };
            let probe = Probe {
                input,
                weights: None,
                label,
                target,
                lambda: lit(crate::surrogate::DEFAULT_LAMBDA),
            };
            Ok((stack, probe))
        }
    }
}

/// Compare analytic gradients against central finite differences for
/// every parameter of the selected pipeline, on the f64 reference path.
pub fn grad_check(pipeline: Pipeline, seed: u64, step: f64) -> Result<GradCheckReport> {
    if step <= 0.0 || !step.is_finite() {
        return Err(Error::Config(format!("finite-difference step {step} must be positive")));
    }
    let (stack32, probe32) = build_rig(pipeline, seed)?;
    let mut shadow: Stack<f64> = stack32.cast();
    let probe64: Probe<f64> = probe32.cast();
    let production_loss = shadow.loss(&probe64, true)?;

    // flatten analytic grads with their names, in parameter order
    let mut analytic = Vec::new();
    let mut layout = Vec::new();
    for (name, param) in shadow.named_params_mut() {
        layout.push((name, param.len()));
        analytic.extend(param.grad.data().iter().copied());
        param.zero_grad();
    }

    // record the rectifier branches at the unperturbed point and verify
    // the oracle composition reproduces the production forward
    let mut masks = Vec::new();
    let oracle_loss = oracle_forward(&mut shadow, &probe64, &mut MaskTape::Record(&mut masks))?;
    if relative_error(production_loss, oracle_loss) > 1e-12 {
        return Err(Error::NonFinite(format!(
            "oracle forward disagrees with production forward: {oracle_loss} vs {production_loss}"
        )));
    }

    let eval = |stack: &mut Stack<f64>| {
        oracle_forward(stack, &probe64, &mut MaskTape::Replay { masks: &masks, next: 0 })
    };
    let mut max_rel_error = 0.0f64;
    let mut worst_param = String::new();
    let mut max_coordinate_error = 0.0f64;
    let mut worst_coordinate = String::new();
    let mut flat = 0usize;
    for (t_idx, (name, len)) in layout.iter().enumerate() {
        let mut norm_analytic = 0.0f64;
        let mut norm_numeric = 0.0f64;
        let mut norm_diff = 0.0f64;
        for e in 0..*len {
            let original = shadow.params_mut()[t_idx].value.data()[e];
            shadow.params_mut()[t_idx].value.data_mut()[e] = original + step;
            let plus = eval(&mut shadow)?;
            shadow.params_mut()[t_idx].value.data_mut()[e] = original - step;
            let minus = eval(&mut shadow)?;
            shadow.params_mut()[t_idx].value.data_mut()[e] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[flat];
            // both sides below the formula's zero floor agree on "zero";
            // what remains there is quotient rounding, not gradient
            // disagreement (conv biases feeding batch norm have exactly
            // zero gradient, for example)
            if a.abs() >= 1e-8 || numeric.abs() >= 1e-8 {
                norm_analytic += a * a;
                norm_numeric += numeric * numeric;
                norm_diff += (a - numeric) * (a - numeric);
            }
            let err = relative_error(a, numeric);
            if err > max_coordinate_error {
                max_coordinate_error = err;
                worst_coordinate = format!("{name}[{e}]");
            }
            flat += 1;
        }
        let err = relative_error_of_norms(norm_diff.sqrt(), norm_analytic.sqrt(), norm_numeric.sqrt());
        if err > max_rel_error {
            max_rel_error = err;
            worst_param = name.clone();
        }
    }
    Ok(GradCheckReport {
        pipeline,
        seed,
        step,
        params_checked: flat,
        max_rel_error,
        worst_param,
        max_coordinate_error,
        worst_coordinate,
    })
}

/// Central finite difference of a scalar function, exposed so tests can
/// validate the oracle itself on functions with known derivatives.
pub fn central_difference(f: &mut dyn FnMut(f64) -> Result<f64>, at: f64, step: f64) -> Result<f64> {
    let plus = f(at + step)?;
    let minus = f(at - step)?;
    Ok((plus - minus) / (2.0 * step))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipeline_names_roundtrip() {
        for p in Pipeline::ALL {
            assert_eq!(p.as_str().parse::<Pipeline>().unwrap(), p);
        }
        assert!("conv".parse::<Pipeline>().is_err());
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.0001) - 1e-4).abs() < 1e-6);
    }

    #[test]
    fn central_difference_is_exact_for_linear_functions() {
        // finite differences are exact on linear maps up to rounding
        let mut f = |x: f64| Ok(3.5 * x - 2.0);
        let d = central_difference(&mut f, 0.7, 1e-3).unwrap();
        assert!((d - 3.5).abs() < 1e-10, "slope {d}");
    }

    #[test]
    fn central_difference_converges_at_second_order() {
        // smooth nonlinear function: halving h shrinks the truncation
        // error by about 4
        let mut f = |x: f64| Ok((2.0 * x).sin());
        let exact = 2.0 * (2.0f64 * 0.3).cos();
        let e1 = (central_difference(&mut f, 0.3, 1e-2).unwrap() - exact).abs();
        let e2 = (central_difference(&mut f, 0.3, 5e-3).unwrap() - exact).abs();
        let ratio = e1 / e2;
        assert!((3.0..5.0).contains(&ratio), "convergence ratio {ratio}");
    }

    #[test]
    fn gge_pipeline_gradients_match() {
        let report = grad_check(Pipeline::Gge, 1, DEFAULT_STEP).unwrap();
        assert_eq!(report.params_checked, 4);
        assert!(
            report.max_rel_error <= TOLERANCE,
            "gge max err {} at {}",
            report.max_rel_error,
            report.worst_param
        );
    }

    #[test]
    fn bad_step_is_rejected() {
        assert!(matches!(
            grad_check(Pipeline::Gge, 0, 0.0).unwrap_err(),
            Error::Config(_)
        ));
    }
}
