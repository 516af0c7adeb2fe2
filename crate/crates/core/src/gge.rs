//! Global gamma enhancement: one learnable exponent per packed plane.
//!
//! Each exponent is derived from an unconstrained scalar α through
//! `γ = γ_min + (tanh(α) + 1)/2 · (γ_max − γ_min)`, which keeps γ
//! strictly inside its bounds for any finite α. The transform itself is
//! `255 · x^γ` per channel, applied after clamping inputs to `[ε, 1]`.

use crate::error::{Error, Result};
use crate::nn::dims4;
use crate::tensor::{lit, ParamTensor, Scalar, Tensor};

pub const GAMMA_MIN_DEFAULT: f64 = 1.0 / 10.5;
pub const GAMMA_MAX_DEFAULT: f64 = 1.0 / 7.0;

/// Inputs are clamped to `[GGE_INPUT_EPS, 1]` before exponentiation so
/// `x^γ ln x` and `x^(γ−1)` stay finite at zero pixels.
pub const GGE_INPUT_EPS: f64 = 1e-6;
pub const GGE_OUTPUT_SCALE: f64 = 255.0;

/// Map an unconstrained α into `(gamma_min, gamma_max)`, strictly
/// monotone increasing in α.
pub fn gamma_of_alpha<T: Scalar>(alpha: T, gamma_min: T, gamma_max: T) -> Result<T> {
    if !alpha.is_finite() {
        return Err(Error::NonFinite(format!("alpha = {alpha:?}")));
    }
    check_bounds(gamma_min, gamma_max)?;
    let half = lit::<T>(0.5);
    Ok(gamma_min + (alpha.tanh() + T::one()) * half * (gamma_max - gamma_min))
}

fn check_bounds<T: Scalar>(gamma_min: T, gamma_max: T) -> Result<()> {
    if gamma_min <= T::zero()
        || gamma_min >= gamma_max
        || !gamma_min.is_finite()
        || !gamma_max.is_finite()
    {
        return Err(Error::Config(format!(
            "gamma bounds must satisfy 0 < min < max, got ({gamma_min:?}, {gamma_max:?})"
        )));
    }
    Ok(())
}

/// The four learnable gamma parameters and their bounds.
#[derive(Debug, Clone)]
pub struct GammaParams<T = f32> {
    /// Unconstrained `(α_R, α_G1, α_G2, α_B)`, shape `[4]`.
    pub alpha: ParamTensor<T>,
    pub gamma_min: T,
    pub gamma_max: T,
}

#[derive(Debug)]
pub struct GgeCache<T> {
    clamped: Tensor<T>,
    output: Tensor<T>,
    in_range: Vec<bool>,
    gammas: [T; 4],
}

impl<T: Scalar> GammaParams<T> {
    /// α initialized to 0, placing every γ at the midpoint of its range.
    pub fn new(gamma_min: T, gamma_max: T) -> Result<Self> {
        check_bounds(gamma_min, gamma_max)?;
        Ok(Self { alpha: ParamTensor::zeros(&[4]), gamma_min, gamma_max })
    }

    pub fn with_defaults() -> Self {
        Self::new(lit(GAMMA_MIN_DEFAULT), lit(GAMMA_MAX_DEFAULT)).expect("default bounds valid")
    }

    pub fn param_count(&self) -> usize {
        self.alpha.len()
    }

    pub fn gammas(&self) -> Result<[T; 4]> {
        let a = self.alpha.value.data();
        Ok([
            gamma_of_alpha(a[0], self.gamma_min, self.gamma_max)?,
            gamma_of_alpha(a[1], self.gamma_min, self.gamma_max)?,
            gamma_of_alpha(a[2], self.gamma_min, self.gamma_max)?,
            gamma_of_alpha(a[3], self.gamma_min, self.gamma_max)?,
        ])
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut ParamTensor<T>)> {
        vec![("gge.alpha".to_string(), &mut self.alpha)]
    }

    pub fn cast<U: Scalar>(&self) -> GammaParams<U> {
        GammaParams {
            alpha: self.alpha.cast(),
            gamma_min: U::from(self.gamma_min).expect("bound cast"),
            gamma_max: U::from(self.gamma_max).expect("bound cast"),
        }
    }

    /// `X_γ^i = 255 · clamp(x_i, ε, 1)^{γ_i}` over a `[N, 4, H, W]` tensor.
    pub fn forward(&self, input: &Tensor<T>) -> Result<(Tensor<T>, GgeCache<T>)> {
        let [n, c, h, w] = dims4(input, "gamma input")?;
        if c != 4 {
            return Err(Error::Shape(format!("gamma transform expects 4 planes, got {c}")));
        }
        let gammas = self.gammas()?;
        let eps = lit::<T>(GGE_INPUT_EPS);
        let scale = lit::<T>(GGE_OUTPUT_SCALE);
        let plane = h * w;
        let mut clamped = Tensor::zeros(input.shape());
        let mut output = Tensor::zeros(input.shape());
        let mut in_range = vec![false; input.len()];
        let idat = input.data();
        let cdat = clamped.data_mut();
        let odat = output.data_mut();
        for b in 0..n {
            for (ch, &gamma) in gammas.iter().enumerate() {
                let base = (b * 4 + ch) * plane;
                for i in 0..plane {
                    let v = idat[base + i];
                    if !v.is_finite() {
                        return Err(Error::NonFinite("gamma transform input".into()));
                    }
                    let x = v.max(eps).min(T::one());
                    in_range[base + i] = v >= eps && v <= T::one();
                    cdat[base + i] = x;
                    odat[base + i] = scale * x.powf(gamma);
                }
            }
        }
        let cache = GgeCache { clamped, output: output.clone(), in_range, gammas };
        Ok((output, cache))
    }

    /// Chain rule through the transform's pieces: `∂X/∂γ = X·ln x`,
    /// `∂γ/∂α = (γ_max−γ_min)/2·(1−tanh²α)`, `∂X/∂x = 255·γ·x^{γ−1}`
    /// (zero where the input clamp was active).
    pub fn backward(&mut self, cache: GgeCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        if grad_out.shape() != cache.clamped.shape() {
            return Err(Error::Shape(format!(
                "gamma grad_out must be {:?}, got {:?}",
                cache.clamped.shape(),
                grad_out.shape()
            )));
        }
        let [n, _, h, w] = dims4(&cache.clamped, "gamma cache")?;
        let plane = h * w;
        let scale = lit::<T>(GGE_OUTPUT_SCALE);
        let half = lit::<T>(0.5);
        let range = self.gamma_max - self.gamma_min;
        let alphas = self.alpha.value.data().to_vec();
        let mut grad_in = Tensor::zeros(cache.clamped.shape());
        let cdat = cache.clamped.data();
        let odat = cache.output.data();
        let gdat = grad_out.data();
        let gidat = grad_in.data_mut();
        let galpha = self.alpha.grad.data_mut();
        for ch in 0..4 {
            let gamma = cache.gammas[ch];
            let tanh_a = alphas[ch].tanh();
            let dgamma_dalpha = range * half * (T::one() - tanh_a * tanh_a);
            let mut grad_gamma = T::zero();
            for b in 0..n {
                let base = (b * 4 + ch) * plane;
                for i in 0..plane {
                    let g = gdat[base + i];
                    let x = cdat[base + i];
                    grad_gamma = grad_gamma + g * odat[base + i] * x.ln();
                    if cache.in_range[base + i] {
                        gidat[base + i] = g * scale * gamma * x.powf(gamma - T::one());
                    }
                }
            }
            galpha[ch] = galpha[ch] + grad_gamma * dgamma_dalpha;
        }
        Ok(grad_in)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MID: f64 = (GAMMA_MIN_DEFAULT + GAMMA_MAX_DEFAULT) / 2.0;

    #[test]
    fn alpha_zero_maps_to_midpoint() {
        let g = gamma_of_alpha(0.0f64, GAMMA_MIN_DEFAULT, GAMMA_MAX_DEFAULT).unwrap();
        assert!((g - MID).abs() < 1e-12);
        assert!((g - 0.119_047_6).abs() < 1e-6);
    }

    #[test]
    fn saturated_alpha_approaches_bounds() {
        let hi = gamma_of_alpha(60.0f64, GAMMA_MIN_DEFAULT, GAMMA_MAX_DEFAULT).unwrap();
        assert!((hi - GAMMA_MAX_DEFAULT).abs() < 1e-12);
        let lo = gamma_of_alpha(-60.0f64, GAMMA_MIN_DEFAULT, GAMMA_MAX_DEFAULT).unwrap();
        assert!((lo - GAMMA_MIN_DEFAULT).abs() < 1e-12);
    }

    #[test]
    fn alpha_one_matches_independent_evaluation() {
        // tanh(1) = 0.761594..., so γ = min + (tanh(1)+1)/2 · range
        let g = gamma_of_alpha(1.0f64, GAMMA_MIN_DEFAULT, GAMMA_MAX_DEFAULT).unwrap();
        assert!((g - 0.137_180_8).abs() < 1e-6, "gamma {g}");
    }

    #[test]
    fn non_finite_alpha_is_an_error() {
        assert!(matches!(
            gamma_of_alpha(f64::NAN, GAMMA_MIN_DEFAULT, GAMMA_MAX_DEFAULT).unwrap_err(),
            Error::NonFinite(_)
        ));
    }

    #[test]
    fn unit_input_maps_to_255_for_any_gamma() {
        for bounds in [(GAMMA_MIN_DEFAULT, GAMMA_MAX_DEFAULT), (0.4, 0.6)] {
            let params = GammaParams::<f64>::new(bounds.0, bounds.1).unwrap();
            let input = Tensor::filled(&[1, 4, 1, 1], 1.0);
            let (out, _) = params.forward(&input).unwrap();
            assert!(out.data().iter().all(|&v| v == 255.0));
        }
    }

    #[test]
    fn quarter_input_with_gamma_half_gives_127_5() {
        // bounds (0.4, 0.6) put the α=0 midpoint exactly at γ = 0.5
        let params = GammaParams::<f64>::new(0.4, 0.6).unwrap();
        let input = Tensor::filled(&[1, 4, 1, 1], 0.25);
        let (out, _) = params.forward(&input).unwrap();
        for &v in out.data() {
            assert!((v - 127.5).abs() < 1e-9);
        }
    }

    #[test]
    fn near_zero_input_stays_positive() {
        let params = GammaParams::<f64>::with_defaults();
        let input = Tensor::filled(&[1, 4, 1, 1], 0.0);
        let (out, _) = params.forward(&input).unwrap();
        for &v in out.data() {
            assert!(v > 0.0 && v < 255.0 * 0.3);
        }
    }

    #[test]
    fn gamma_partial_matches_hand_value() {
        // ∂X/∂γ at x = 0.25, γ = 0.5 is 127.5·ln(0.25) ≈ −176.7525
        let mut params = GammaParams::<f64>::new(0.4, 0.6).unwrap();
        let input = Tensor::filled(&[1, 4, 1, 1], 0.25);
        let (_, cache) = params.forward(&input).unwrap();
        let ones = Tensor::filled(&[1, 4, 1, 1], 1.0);
        params.backward(cache, &ones).unwrap();
        // chain: grad_alpha = ∂X/∂γ · ∂γ/∂α with ∂γ/∂α = 0.1 at α = 0
        let expected = 127.5 * 0.25f64.ln() * ((0.6 - 0.4) / 2.0);
        for &g in params.alpha.grad.data() {
            assert!((g - expected).abs() < 1e-9, "grad {g} vs {expected}");
        }
        assert!((127.5 * 0.25f64.ln() + 176.7525).abs() < 1e-3);
    }

    #[test]
    fn saturated_alpha_kills_alpha_gradient() {
        let mut params = GammaParams::<f64>::with_defaults();
        params.alpha.value.fill(25.0);
        let input = Tensor::filled(&[1, 4, 2, 2], 0.5);
        let (_, cache) = params.forward(&input).unwrap();
        params.backward(cache, &Tensor::filled(&[1, 4, 2, 2], 1.0)).unwrap();
        for &g in params.alpha.grad.data() {
            assert!(g.abs() < 1e-12, "saturated grad {g}");
        }
    }

    #[test]
    fn input_gradient_is_masked_outside_clamp_range() {
        let mut params = GammaParams::<f32>::with_defaults();
        let input = Tensor::from_vec(&[1, 4, 1, 1], vec![0.0, 0.5, 1.0, 0.5]).unwrap();
        let (_, cache) = params.forward(&input).unwrap();
        let grad = params.backward(cache, &Tensor::filled(&[1, 4, 1, 1], 1.0)).unwrap();
        assert_eq!(grad.data()[0], 0.0); // clamped at ε
        assert!(grad.data()[1] > 0.0);
        assert!(grad.data()[2] > 0.0); // x = 1 is inside the clamp range
    }

    #[test]
    fn forward_is_order_preserving_per_channel() {
        let params = GammaParams::<f32>::with_defaults();
        // each plane holds an ascending ramp; outputs must stay sorted
        let vals: Vec<f32> = (0..64).map(|i| (i % 16) as f32 / 15.0).collect();
        let input = Tensor::from_vec(&[1, 4, 4, 4], vals).unwrap();
        let (out, _) = params.forward(&input).unwrap();
        for ch in 0..4 {
            let plane = &out.data()[ch * 16..(ch + 1) * 16];
            for pair in plane.windows(2) {
                assert!(pair[0] <= pair[1]);
            }
        }
    }
}
