//! The model catalogue used by the packaged experiments.

use serde::{Deserialize, Serialize};

use super::model::{GrowthProfile, SdeModel};
use crate::error::{Error, Result};

/// `dX = -|X|² X dt + |X|² dW` in one dimension.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cubic;

impl SdeModel for Cubic {
    fn dim_state(&self) -> usize {
        1
    }
    fn dim_noise(&self) -> usize {
        1
    }
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = -(x[0] * x[0]) * x[0];
    }
    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = x[0] * x[0];
    }
    fn growth(&self) -> GrowthProfile {
        // against V = U = |x|², γ = 1/2
        GrowthProfile {
            k: 1.0,
            kappa: 3.0,
            kappa1: 3.0,
            kappa2: 2.0,
            q1: 2.0,
            q2: 2.0,
            nu: 1.0,
        }
    }
    fn vanishes_at_origin(&self) -> bool {
        true
    }
    fn name(&self) -> &str {
        "cubic"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorenzParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        LorenzParams {
            alpha1: 1.0,
            alpha2: 1.0,
            beta1: 0.5,
            beta2: 0.5,
            beta3: 0.5,
        }
    }
}

/// Stochastic Lorenz system in `R^3` with diagonal multiplicative noise.
#[derive(Debug, Clone, Copy)]
pub struct Lorenz {
    p: LorenzParams,
}

impl Lorenz {
    pub fn new(p: LorenzParams) -> Result<Self> {
        if 2.0 * p.alpha1 <= p.beta1 * p.beta1 {
            return Err(Error::config("lorenz guard 2*alpha1 > beta1^2 violated"));
        }
        if p.beta2 * p.beta2 >= 2.0 {
            return Err(Error::config("lorenz guard beta2^2 < 2 violated"));
        }
        if 2.0 * p.alpha2 <= p.beta3 * p.beta3 {
            return Err(Error::config("lorenz guard 2*alpha2 > beta3^2 violated"));
        }
        Ok(Lorenz { p })
    }

    pub fn params(&self) -> LorenzParams {
        self.p
    }

    /// Mean-square decay rate `(2α₁-β₁²) ∧ (2-β₂²) ∧ (2α₂-β₃²)`.
    pub fn mean_square_rate(&self) -> f64 {
        let p = self.p;
        (2.0 * p.alpha1 - p.beta1 * p.beta1)
            .min(2.0 - p.beta2 * p.beta2)
            .min(2.0 * p.alpha2 - p.beta3 * p.beta3)
    }

    /// Closed form of `L|x|²`.
    pub fn generator_sq_norm(&self, x: &[f64]) -> f64 {
        let p = self.p;
        -(2.0 * p.alpha1 - p.beta1 * p.beta1) * x[0] * x[0]
            - (2.0 - p.beta2 * p.beta2) * x[1] * x[1]
            - (2.0 * p.alpha2 - p.beta3 * p.beta3) * x[2] * x[2]
    }
}

impl SdeModel for Lorenz {
    fn dim_state(&self) -> usize {
        3
    }
    fn dim_noise(&self) -> usize {
        3
    }
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let p = self.p;
        out[0] = p.alpha1 * (x[1] - x[0]);
        out[1] = -p.alpha1 * x[0] - x[1] - x[0] * x[2];
        out[2] = x[0] * x[1] - p.alpha2 * x[2];
    }
    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[0] = self.p.beta1 * x[0];
        out[4] = self.p.beta2 * x[1];
        out[8] = self.p.beta3 * x[2];
    }
    fn growth(&self) -> GrowthProfile {
        let p = self.p;
        let kb = (5.0 * p.alpha1 * p.alpha1 + 4.0 * p.alpha1 + p.alpha2 * p.alpha2 + 4.0).sqrt();
        let ks = (p.beta1 * p.beta1 + p.beta2 * p.beta2 + p.beta3 * p.beta3).sqrt();
        // U = |x| + |x|², V = |x|², γ = 1/2
        GrowthProfile {
            k: kb.max(ks),
            kappa: 2.0,
            kappa1: 2.0,
            kappa2: 1.0,
            q1: 1.0,
            q2: 2.0,
            nu: 2.0,
        }
    }
    fn vanishes_at_origin(&self) -> bool {
        true
    }
    fn name(&self) -> &str {
        "lorenz"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VanDerPolParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta: f64,
}

impl Default for VanDerPolParams {
    fn default() -> Self {
        VanDerPolParams {
            alpha1: 1.0,
            alpha2: 1.0,
            beta: 1.0,
        }
    }
}

/// Duffing-van der Pol type oscillator in `R^2` with a three-dimensional
/// driver, of which only the second component acts (on `x₂`).
#[derive(Debug, Clone, Copy)]
pub struct VanDerPol {
    p: VanDerPolParams,
}

impl VanDerPol {
    pub fn new(p: VanDerPolParams) -> Result<Self> {
        if p.alpha1 <= 0.0 {
            return Err(Error::config("van der Pol guard alpha1 > 0 violated"));
        }
        if 2.0 * p.alpha2 <= p.beta * p.beta {
            return Err(Error::config("van der Pol guard 2*alpha2 > beta^2 violated"));
        }
        Ok(VanDerPol { p })
    }

    pub fn params(&self) -> VanDerPolParams {
        self.p
    }

    /// Closed form of `LV` for `V = x₁⁴ + 2x₂²`.
    pub fn generator_vdp_v(&self, x: &[f64]) -> f64 {
        let p = self.p;
        let x1_4 = x[0] * x[0] * x[0] * x[0];
        -4.0 * p.alpha1 * x1_4 - (4.0 * p.alpha2 - 2.0 * p.beta * p.beta) * x[1] * x[1]
    }

    /// Largest `ρ` with `LV ≤ -ρV` for `V = x₁⁴ + 2x₂²`: `4α₁ ∧ (2α₂ - β²)`.
    pub fn exponential_rate(&self) -> f64 {
        let p = self.p;
        (4.0 * p.alpha1).min(2.0 * p.alpha2 - p.beta * p.beta)
    }
}

impl SdeModel for VanDerPol {
    fn dim_state(&self) -> usize {
        2
    }
    fn dim_noise(&self) -> usize {
        3
    }
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let p = self.p;
        out[0] = x[1] - p.alpha1 * x[0];
        out[1] = -p.alpha2 * x[1] - x[0] * x[0] * x[0];
    }
    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[4] = self.p.beta * x[1];
    }
    fn growth(&self) -> GrowthProfile {
        let p = self.p;
        // against V = U = x₁⁴ + 2x₂², γ = 1/4
        GrowthProfile {
            k: (p.alpha1 + p.alpha2 + 2.0).max(p.beta.abs()),
            kappa: 3.0,
            kappa1: 3.0,
            kappa2: 2.0,
            q1: 4.0,
            q2: 4.0,
            nu: 2.0,
        }
    }
    fn vanishes_at_origin(&self) -> bool {
        true
    }
    fn name(&self) -> &str {
        "vdp"
    }
}

/// Scalar linear SDE `dX = μX dt + σX dW` (geometric Brownian motion).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gbm {
    pub mu: f64,
    pub sigma: f64,
}

impl Gbm {
    pub fn new(mu: f64, sigma: f64) -> Self {
        Gbm { mu, sigma }
    }

    /// Exact solution given the Brownian value `W_t`.
    pub fn exact(&self, x0: f64, t: f64, w_t: f64) -> f64 {
        x0 * ((self.mu - 0.5 * self.sigma * self.sigma) * t + self.sigma * w_t).exp()
    }

    pub fn exact_mean(&self, x0: f64, t: f64) -> f64 {
        x0 * (self.mu * t).exp()
    }
}

impl SdeModel for Gbm {
    fn dim_state(&self) -> usize {
        1
    }
    fn dim_noise(&self) -> usize {
        1
    }
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.mu * x[0];
    }
    fn diffusion(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.sigma * x[0];
    }
    fn growth(&self) -> GrowthProfile {
        GrowthProfile {
            k: self.mu.abs().max(self.sigma.abs()),
            kappa: 1.0,
            kappa1: 1.0,
            kappa2: 1.0,
            q1: 2.0,
            q2: 2.0,
            nu: 1.0,
        }
    }
    fn vanishes_at_origin(&self) -> bool {
        true
    }
    fn name(&self) -> &str {
        "gbm"
    }
}

/// Two scalar linear SDEs `dX = νX dt + σX dW` and `dY = λY dt + σY dW`
/// sharing the diffusion. Ordered on the half line when `ν ≤ λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearPair {
    pub nu: f64,
    pub lambda: f64,
    pub sigma: f64,
}

impl LinearPair {
    pub fn lower(&self) -> Gbm {
        Gbm::new(self.nu, self.sigma)
    }

    pub fn upper(&self) -> Gbm {
        Gbm::new(self.lambda, self.sigma)
    }
}

/// `b = 0`, `σ = 0`.
#[derive(Debug, Clone, Copy)]
pub struct Zero {
    pub d: usize,
    pub m: usize,
}

impl SdeModel for Zero {
    fn dim_state(&self) -> usize {
        self.d
    }
    fn dim_noise(&self) -> usize {
        self.m
    }
    fn drift(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn diffusion(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn vanishes_at_origin(&self) -> bool {
        true
    }
    fn name(&self) -> &str {
        "zero"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::model::{eval_diffusion, eval_drift};

    fn vanishing_models() -> Vec<Box<dyn SdeModel>> {
        vec![
            Box::new(Cubic),
            Box::new(Lorenz::new(LorenzParams::default()).unwrap()),
            Box::new(VanDerPol::new(VanDerPolParams::default()).unwrap()),
            Box::new(Gbm::new(0.1, 0.3)),
            Box::new(Zero { d: 2, m: 2 }),
        ]
    }

    #[test]
    fn builtins_vanish_at_origin() {
        for model in vanishing_models() {
            assert!(model.vanishes_at_origin());
            let zero = vec![0.0; model.dim_state()];
            for i in 0..100 {
                let t = i as f64 * 0.37;
                assert!(eval_drift(model.as_ref(), t, &zero).iter().all(|v| *v == 0.0));
                assert!(eval_diffusion(model.as_ref(), t, &zero)
                    .iter()
                    .all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn lorenz_guards() {
        let mut p = LorenzParams::default();
        p.beta1 = 1.5;
        assert!(Lorenz::new(p).is_err());
        let mut p = LorenzParams::default();
        p.beta2 = 1.5;
        assert!(Lorenz::new(p).is_err());
        let mut p = LorenzParams::default();
        p.alpha2 = 0.1;
        assert!(Lorenz::new(p).is_err());
        assert_eq!(Lorenz::new(LorenzParams::default()).unwrap().mean_square_rate(), 1.75);
    }

    #[test]
    fn vdp_guards() {
        assert!(VanDerPol::new(VanDerPolParams {
            alpha1: 0.0,
            ..Default::default()
        })
        .is_err());
        assert!(VanDerPol::new(VanDerPolParams {
            alpha2: 0.5,
            ..Default::default()
        })
        .is_err());
        let v = VanDerPol::new(VanDerPolParams::default()).unwrap();
        assert_eq!(v.exponential_rate(), 1.0);
    }

    #[test]
    fn gbm_exact_solution_at_zero_noise() {
        let g = Gbm::new(0.1, 0.0);
        assert!((g.exact(2.0, 1.0, 0.7) - 2.0 * 0.1f64.exp()).abs() < 1e-15);
    }
}
