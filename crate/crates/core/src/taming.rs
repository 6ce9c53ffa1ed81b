//! Taming functions, projection exponents, step-size ceilings, the constants
//! `ρ̃` and `μ`, and sampled verification of the taming hypotheses.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hs_norm, norm};
use crate::sampling::SampleSpec;
use crate::schemes::{truncation_level, Taming};
use crate::sde::lyapunov::{derivative_norm, Lyapunov, LyapunovClass};
use crate::sde::model::{GrowthProfile, SdeModel};
use crate::sde::operator::diffusion_operator;

/// Slack applied to strict upper bounds (`r <`, `μ <`, `h <`).
pub const DEFAULT_SLACK: f64 = 0.9;

/// Relative tolerance of every sampled ratio check.
pub const RATIO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TamingPurpose {
    Integrability,
    AsStability,
    VExpStability,
    Positivity,
    Comparison,
}

/// Everything derived for one experiment, kept for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TamingPlan {
    pub purpose: TamingPurpose,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub c: Option<f64>,
    pub kappa_star: Option<f64>,
    pub mu: f64,
    pub r: Option<f64>,
    pub h_max: f64,
    pub alpha: Option<f64>,
}

/// Case-(i) balanced taming `G_σ = C V^{κ*γ} h^{β₂}`, `G_b = 2G_σ + G_σ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalancedTaming {
    pub c: f64,
    pub kappa_star: f64,
    pub gamma: f64,
    pub beta2: f64,
    pub mu: f64,
}

impl BalancedTaming {
    /// Smallest admissible choices: `C = (K/μ) ∨ 1` and `κ* = (κ − 1)₊`.
    pub fn derive(gamma: f64, growth: &GrowthProfile, mu: f64, beta2: f64) -> Result<Self> {
        let t = BalancedTaming {
            c: (growth.k / mu).max(1.0),
            kappa_star: (growth.kappa - 1.0).max(0.0),
            gamma,
            beta2,
            mu,
        };
        t.validate(growth)?;
        Ok(t)
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_kappa_star(mut self, kappa_star: f64) -> Self {
        self.kappa_star = kappa_star;
        self
    }

    pub fn beta1(&self) -> f64 {
        2.0 * self.beta2
    }

    pub fn validate(&self, growth: &GrowthProfile) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::config(format!("μ > 0 violated: μ = {}", self.mu)));
        }
        if !(self.beta2 > 0.0 && self.beta2 <= 0.5) {
            return Err(Error::config(format!(
                "β₂ ∈ (0, 1/2] violated: β₂ = {}",
                self.beta2
            )));
        }
        if self.kappa_star < growth.kappa - 1.0 {
            return Err(Error::config(format!(
                "κ* ≥ κ − 1 violated: κ* = {}, κ = {}",
                self.kappa_star, growth.kappa
            )));
        }
        let floor = (growth.k / self.mu).max(1.0);
        if self.c < floor {
            return Err(Error::config(format!(
                "C ≥ (K/μ) ∨ 1 violated: C = {}, K/μ = {}",
                self.c,
                growth.k / self.mu
            )));
        }
        if self.c * self.c < growth.k / self.mu {
            return Err(Error::config(format!(
                "C² ≥ K/μ violated: C = {}, K/μ = {}",
                self.c,
                growth.k / self.mu
            )));
        }
        Ok(())
    }

    pub fn g_sigma(&self, v: f64, h: f64) -> f64 {
        self.c * v.powf(self.kappa_star * self.gamma) * h.powf(self.beta2)
    }

    pub fn taming(&self, lyap: Arc<dyn Lyapunov>) -> Taming {
        let me = *self;
        Taming::case_i(move |x, h| me.g_sigma(lyap.value(x), h))
    }
}

/// Balanced case-(i) taming with the smallest admissible `C` and `κ*`.
pub fn build_balanced_taming(
    lyap: Arc<dyn Lyapunov>,
    growth: &GrowthProfile,
    mu: f64,
    beta2: f64,
) -> Result<Taming> {
    let plan = BalancedTaming::derive(lyap.params().gamma, growth, mu, beta2)?;
    Ok(plan.taming(lyap))
}

/// Guards of the almost-sure stability taming: requires `h < (μλ/K)⁴` and
/// returns the smallest admissible `C = 1/(μ/K − h^{1/4}/λ)`.
pub fn stability_taming_constant(mu: f64, lambda: f64, k: f64, h: f64) -> Result<f64> {
    let h_max = (mu * lambda / k).powi(4);
    if h >= h_max {
        return Err(Error::StepTooLarge {
            h,
            h_max,
            condition: "h < (μλ/K)⁴".into(),
        });
    }
    Ok(1.0 / (mu / k - h.powf(0.25) / lambda))
}

/// Single-`G` taming `G(x) = C (U^{(κ₁−1)γ} ∨ U^{(κ₂−1)γ})` applied as
/// `b/(1 + G h^{1/4})`, `σ/(1 + G h^{1/4})`.
pub fn build_stability_taming<U>(u: U, kappa1: f64, kappa2: f64, gamma: f64, c: f64) -> Taming
where
    U: Fn(&[f64]) -> f64 + Send + Sync + 'static,
{
    Taming::single_power(
        move |x| {
            let ux = u(x);
            c * ux
                .powf((kappa1 - 1.0) * gamma)
                .max(ux.powf((kappa2 - 1.0) * gamma))
        },
        0.25,
    )
}

/// The purpose a projection exponent is derived for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "purpose")]
pub enum ProjectionPurpose {
    /// `r ≤ β₂/((κ−1)qγ)`.
    Integrability { beta2: f64 },
    /// `r < 1/(2(κ−1))`.
    L2Rate,
    /// `r < 1/(4(κ̌−1)qγ)`, the form in the statement of the exponential
    /// stability result for the projected scheme.
    VExpStability,
    /// `r < 1/(2(κ₁−1)qγ) ∧ 1/(4(κ₂−1)qγ)`, the sharper form reached in
    /// the proof.
    VExpStabilityRefined,
    /// `r < α/((κ̌−1)qγ)` for the projected balanced scheme.
    ProjectedBalanced { alpha: f64 },
    /// `r < 1/(4(κ̌−1)qγ)` for almost-sure stability of the projected scheme.
    AsStability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionExponent {
    /// The binding bound; infinite when no superlinearity constrains `r`.
    pub bound: f64,
    pub r: f64,
    pub slack: f64,
    pub strict: bool,
    pub unconstrained: bool,
}

fn inv_or_inf(den: f64) -> f64 {
    if den > 0.0 {
        1.0 / den
    } else {
        f64::INFINITY
    }
}

pub fn derive_projection_exponent(
    purpose: ProjectionPurpose,
    gamma: f64,
    growth: &GrowthProfile,
) -> ProjectionExponent {
    derive_projection_exponent_with_slack(purpose, gamma, growth, DEFAULT_SLACK)
}

pub fn derive_projection_exponent_with_slack(
    purpose: ProjectionPurpose,
    gamma: f64,
    growth: &GrowthProfile,
    slack: f64,
) -> ProjectionExponent {
    let q = growth.q();
    let kc = growth.kappa_check();
    let (bound, strict) = match purpose {
        ProjectionPurpose::Integrability { beta2 } => {
            (beta2 * inv_or_inf((growth.kappa - 1.0) * q * gamma), false)
        }
        ProjectionPurpose::L2Rate => (inv_or_inf(2.0 * (growth.kappa - 1.0)), true),
        ProjectionPurpose::VExpStability | ProjectionPurpose::AsStability => {
            (inv_or_inf(4.0 * (kc - 1.0) * q * gamma), true)
        }
        ProjectionPurpose::VExpStabilityRefined => (
            inv_or_inf(2.0 * (growth.kappa1 - 1.0) * q * gamma)
                .min(inv_or_inf(4.0 * (growth.kappa2 - 1.0) * q * gamma)),
            true,
        ),
        ProjectionPurpose::ProjectedBalanced { alpha } => {
            (alpha * inv_or_inf((kc - 1.0) * q * gamma), true)
        }
    };
    let unconstrained = bound.is_infinite();
    let slack = if strict { slack } else { 1.0 };
    ProjectionExponent {
        bound,
        r: bound * slack,
        slack,
        strict,
        unconstrained,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoTildeMode {
    /// `c(p−1)d^{p−1}μ²`, valid for `μ ≤ 1`.
    Remark,
    /// `cμ²/2 + c Σ_{s=3}^p φ_s μ^s`, `φ_s = d^{s−1}/(⌊s/2⌋!)²`.
    ExactSum,
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

pub fn phi(s: u32, d: usize) -> f64 {
    (d as f64).powi(s as i32 - 1) / factorial(s / 2).powi(2)
}

pub fn compute_rho_tilde(c: f64, p: u32, d: usize, mu: f64, mode: RhoTildeMode) -> Result<f64> {
    match mode {
        RhoTildeMode::Remark => {
            if mu > 1.0 {
                return Err(Error::config(format!(
                    "μ ≤ 1 violated for the simplified ρ̃: μ = {mu}"
                )));
            }
            Ok(c * (p as f64 - 1.0) * (d as f64).powi(p as i32 - 1) * mu * mu)
        }
        RhoTildeMode::ExactSum => {
            let tail: f64 = (3..=p).map(|s| phi(s, d) * mu.powi(s as i32)).sum();
            Ok(c * mu * mu / 2.0 + c * tail)
        }
    }
}

/// Strict upper bound on `μ`: `√ρ/√(c/2 + c d^{p−1}(p−2))`, or with `ρ`
/// absent the almost-sure form `1/√(…)`.
pub fn compute_mu_threshold(c: f64, p: u32, d: usize, rho: Option<f64>) -> f64 {
    let den = (c / 2.0 + c * (d as f64).powi(p as i32 - 1) * (p as f64 - 2.0)).sqrt();
    rho.map_or(1.0, f64::sqrt) / den
}

/// Inputs for [`derive_h_threshold`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum HThresholdRule {
    /// `h < (μλ/K)⁴`.
    AsStabilityBalanced { mu: f64, lambda: f64, k: f64 },
    /// `h < (μ/(2Kν^{(κ̌−1)γ}))^{1/β}`, `β = 1/4 − r(κ̌−1)qγ`.
    VExpStabilityProjected {
        mu: f64,
        k: f64,
        nu: f64,
        kappa_check: f64,
        gamma: f64,
        q: f64,
        r: f64,
    },
    /// `h < (μλ/(K + 2λKν^{(κ̌−1)γ}))^{1/β}`, same `β`.
    AsStabilityProjected {
        mu: f64,
        lambda: f64,
        k: f64,
        nu: f64,
        kappa_check: f64,
        gamma: f64,
        q: f64,
        r: f64,
    },
    /// `h^{1−α} + h^{(1−α)/2} A_h ≤ 1/μ`, shared by positivity and comparison.
    NoiseTruncation { mu: f64, alpha: f64 },
}

/// Largest admissible `h` in `(0, 1]`, or 0 if none.
pub fn derive_h_threshold(rule: HThresholdRule) -> f64 {
    match rule {
        HThresholdRule::AsStabilityBalanced { mu, lambda, k } => (mu * lambda / k).powi(4).min(1.0),
        HThresholdRule::VExpStabilityProjected {
            mu,
            k,
            nu,
            kappa_check,
            gamma,
            q,
            r,
        } => {
            let beta = 0.25 - r * (kappa_check - 1.0) * q * gamma;
            if beta <= 0.0 {
                return 0.0;
            }
            let base = mu / (2.0 * k * nu.powf((kappa_check - 1.0) * gamma));
            base.powf(1.0 / beta).min(1.0)
        }
        HThresholdRule::AsStabilityProjected {
            mu,
            lambda,
            k,
            nu,
            kappa_check,
            gamma,
            q,
            r,
        } => {
            let beta = 0.25 - r * (kappa_check - 1.0) * q * gamma;
            if beta <= 0.0 {
                return 0.0;
            }
            let base = mu * lambda / (k + 2.0 * lambda * k * nu.powf((kappa_check - 1.0) * gamma));
            base.powf(1.0 / beta).min(1.0)
        }
        HThresholdRule::NoiseTruncation { mu, alpha } => noise_truncation_threshold(mu, alpha),
    }
}

/// Left-hand side `h^{1−α} + h^{(1−α)/2} A_h` of the truncated-noise
/// step condition; `A_1 = 0`.
pub fn noise_truncation_lhs(h: f64, alpha: f64) -> f64 {
    let a = if h >= 1.0 {
        0.0
    } else {
        truncation_level(h).unwrap_or(0.0)
    };
    h.powf(1.0 - alpha) + h.powf((1.0 - alpha) / 2.0) * a
}

/// The left-hand side is not monotone on `(0, 1]` (it returns to 1 at
/// `h = 1`), so the ceiling is the first crossing of `1/μ` from the left:
/// every `h` below it is admissible.
fn noise_truncation_threshold(mu: f64, alpha: f64) -> f64 {
    if !(mu > 0.0) {
        return 1.0;
    }
    let target = 1.0 / mu;
    let ok = |h: f64| noise_truncation_lhs(h, alpha) <= target;
    let lo_h = 1e-12;
    if !ok(lo_h) {
        return 0.0;
    }
    let n = 4000;
    let (l0, l1) = (lo_h.ln(), 0.0f64);
    let mut prev = lo_h;
    for i in 1..=n {
        let h = (l0 + (l1 - l0) * i as f64 / n as f64).exp().min(1.0);
        if !ok(h) {
            let (mut lo, mut hi) = (prev, h);
            while (hi - lo) > 1e-10 * lo {
                let mid = 0.5 * (lo + hi);
                if ok(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return lo;
        }
        prev = h;
    }
    1.0
}

/// Right-hand side shapes of the sampled taming conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "condition")]
pub enum TamingCondition {
    /// `|b^h| h^{β₁} ∨ ‖σ^h‖ h^{β₂} ≤ μ(1+V)^γ`.
    Integrability { beta1: f64, beta2: f64 },
    /// `|b^h| h^{1/2} ∨ ‖σ^h‖ h^{1/4} ≤ μ (1+U)^γ z^h / (1+U+z^h)`.
    StabilityAs,
    /// `|b^h| h^{1/2} ∨ ‖σ^h‖ h^{1/4} ≤ μ V^γ`.
    StabilityExp,
    /// `|b^h| h^{1/2} ∨ ‖σ^h‖ h^{1/4} ≤ μ U^γ z^h / (U+z^h)`.
    Simplified,
    /// `‖V^{(i+2j)}‖ |b^h|^i ‖σ^h‖^{2j} h^{(i+j)/2} ≤ μ z^h` for `(i,j) = (2,0)`
    /// and all `3 ≤ i+2j ≤ p`.
    Combo,
    /// `|b^h(x) − b^h(0)| h^α ∨ ‖σ^h‖ h^{α/2} ≤ μ|x|`.
    Positivity { alpha: f64 },
}

impl TamingCondition {
    /// The Eq.-(19)-style condition with `β₁ = 1/2`, `β₂ = 1/4`.
    pub fn integrability() -> Self {
        TamingCondition::Integrability {
            beta1: 0.5,
            beta2: 0.25,
        }
    }
}

pub type ScalarFn<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

/// Auxiliary functions for the stability conditions.
#[derive(Clone, Copy, Default)]
pub struct ConditionAux<'a> {
    /// `z^h`; required by the stability and combo conditions.
    pub z: Option<ScalarFn<'a>>,
    /// Dominating `U`; defaults to the Lyapunov function's own, then `V`.
    pub u: Option<ScalarFn<'a>>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    pub max_ratio: f64,
    pub worst_x: Vec<f64>,
    pub pass: bool,
    /// Samples where the bound is zero but the left side is not.
    pub hard_violations: usize,
    pub n_samples: usize,
    pub tolerance: f64,
    /// The combo condition fell back to the simplified form.
    pub fallback: bool,
}

impl ViolationReport {
    fn new() -> Self {
        ViolationReport {
            max_ratio: 0.0,
            worst_x: Vec::new(),
            pass: true,
            hard_violations: 0,
            n_samples: 0,
            tolerance: RATIO_TOLERANCE,
            fallback: false,
        }
    }

    fn record(&mut self, x: &[f64], ratio: f64) {
        self.n_samples += 1;
        if ratio.is_infinite() {
            self.hard_violations += 1;
        }
        if self.worst_x.is_empty() || ratio > self.max_ratio {
            self.max_ratio = ratio;
            self.worst_x = x.to_vec();
        }
    }

    fn finish(mut self) -> Self {
        self.pass = self.hard_violations == 0 && self.max_ratio <= 1.0 + self.tolerance;
        self
    }

    /// Re-evaluates the verdict at another tolerance.
    pub fn passes_at(&self, tolerance: f64) -> bool {
        self.hard_violations == 0 && self.max_ratio <= 1.0 + tolerance
    }
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        lhs / rhs
    } else if lhs > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

fn coefficient_norms(coeffs: &dyn SdeModel, t: f64, x: &[f64]) -> (f64, f64) {
    let d = coeffs.dim_state();
    let m = coeffs.dim_noise();
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * m];
    coeffs.drift(t, x, &mut b);
    coeffs.diffusion(t, x, &mut s);
    (norm(&b), hs_norm(&s))
}

/// Sampled check of a taming condition at step `h`. `coeffs` is the
/// coefficient pair to test, typically [`crate::schemes::TamedCoefficients::at_step`]
/// or an untamed model. The ratio reported is `LHS / (μ·base)`.
pub fn check_taming_conditions(
    coeffs: &dyn SdeModel,
    lyap: &dyn Lyapunov,
    condition: TamingCondition,
    mu: f64,
    h: f64,
    spec: &SampleSpec,
    aux: ConditionAux<'_>,
) -> Result<ViolationReport> {
    let points = spec.points(coeffs.dim_state());
    check_taming_conditions_at(coeffs, lyap, condition, mu, h, &points, aux)
}

pub fn check_taming_conditions_at(
    coeffs: &dyn SdeModel,
    lyap: &dyn Lyapunov,
    condition: TamingCondition,
    mu: f64,
    h: f64,
    points: &[Vec<f64>],
    aux: ConditionAux<'_>,
) -> Result<ViolationReport> {
    let params = lyap.params();
    let gamma = params.gamma;
    let t = aux.t;
    let needs_z = matches!(
        condition,
        TamingCondition::StabilityAs | TamingCondition::Simplified | TamingCondition::Combo
    );
    if needs_z && aux.z.is_none() {
        return Err(Error::config("this taming condition needs z^h"));
    }
    let u_of = |x: &[f64]| -> f64 {
        match aux.u {
            Some(u) => u(x),
            None => lyap.dominating(x).unwrap_or_else(|| lyap.value(x)),
        }
    };
    let combo_ok = matches!(params.class, LyapunovClass::Hat | LyapunovClass::Bar)
        && points.first().is_none_or(|x| {
            (3..=params.p).all(|s| derivative_norm(lyap, x, s).is_some())
        });
    let mut condition = condition;
    let mut report = ViolationReport::new();
    if condition == TamingCondition::Combo && !combo_ok {
        condition = TamingCondition::Simplified;
        report.fallback = true;
    }
    let b0 = if let TamingCondition::Positivity { .. } = condition {
        let zero = vec![0.0; coeffs.dim_state()];
        let mut b = vec![0.0; coeffs.dim_state()];
        coeffs.drift(t, &zero, &mut b);
        b
    } else {
        Vec::new()
    };

    for x in points {
        let r = match condition {
            TamingCondition::Integrability { beta1, beta2 } => {
                let (nb, ns) = coefficient_norms(coeffs, t, x);
                let lhs = (nb * h.powf(beta1)).max(ns * h.powf(beta2));
                ratio(lhs, (1.0 + lyap.value(x)).powf(gamma)) / mu
            }
            TamingCondition::StabilityExp => {
                let (nb, ns) = coefficient_norms(coeffs, t, x);
                let lhs = (nb * h.sqrt()).max(ns * h.powf(0.25));
                ratio(lhs, lyap.value(x).powf(gamma)) / mu
            }
            TamingCondition::StabilityAs => {
                let (nb, ns) = coefficient_norms(coeffs, t, x);
                let lhs = (nb * h.sqrt()).max(ns * h.powf(0.25));
                let (u, z) = (u_of(x), (aux.z.unwrap())(x));
                ratio(lhs, (1.0 + u).powf(gamma) * z / (1.0 + u + z)) / mu
            }
            TamingCondition::Simplified => {
                let (nb, ns) = coefficient_norms(coeffs, t, x);
                let lhs = (nb * h.sqrt()).max(ns * h.powf(0.25));
                let (u, z) = (u_of(x), (aux.z.unwrap())(x));
                let base = if u + z > 0.0 {
                    u.powf(gamma) * z / (u + z)
                } else {
                    0.0
                };
                ratio(lhs, base) / mu
            }
            TamingCondition::Combo => {
                let (nb, ns) = coefficient_norms(coeffs, t, x);
                let z = (aux.z.unwrap())(x);
                let mut worst: f64 = 0.0;
                let mut pairs = vec![(2u32, 0u32)];
                for s in 3..=params.p {
                    for j in 0..=s / 2 {
                        pairs.push((s - 2 * j, j));
                    }
                }
                for (i, j) in pairs {
                    let dn = derivative_norm(lyap, x, i + 2 * j).unwrap_or(0.0);
                    let lhs = dn
                        * nb.powi(i as i32)
                        * ns.powi(2 * j as i32)
                        * h.powf((i + j) as f64 / 2.0);
                    worst = worst.max(ratio(lhs, z));
                }
                worst / mu
            }
            TamingCondition::Positivity { alpha } => {
                let d = coeffs.dim_state();
                let mut b = vec![0.0; d];
                coeffs.drift(t, x, &mut b);
                for (v, z) in b.iter_mut().zip(&b0) {
                    *v -= z;
                }
                let (_, ns) = coefficient_norms(coeffs, t, x);
                let lhs = (norm(&b) * h.powf(alpha)).max(ns * h.powf(alpha / 2.0));
                ratio(lhs, norm(x)) / mu
            }
        };
        if r.is_nan() {
            return Err(Error::DomainViolation { x: x.clone() });
        }
        report.record(x, r);
    }
    Ok(report.finish())
}

/// `z(x) ≥ λ(1+U)^{1−γ}(U^{κ₁γ} ∨ U^{κ₂γ})`; the ratio is right over left.
#[allow(clippy::too_many_arguments)]
pub fn check_z_growth(
    z: ScalarFn<'_>,
    u: ScalarFn<'_>,
    lambda: f64,
    kappa1: f64,
    kappa2: f64,
    gamma: f64,
    d: usize,
    spec: &SampleSpec,
) -> ViolationReport {
    let mut report = ViolationReport::new();
    for x in spec.points(d) {
        let ux = u(&x);
        let need = lambda
            * (1.0 + ux).powf(1.0 - gamma)
            * ux.powf(kappa1 * gamma).max(ux.powf(kappa2 * gamma));
        report.record(&x, ratio(need, z(&x)));
    }
    report.finish()
}

/// `|b| ∨ ‖σ‖ ≤ K(1 + V^{κγ})` on the samples.
pub fn check_growth(
    model: &dyn SdeModel,
    lyap: &dyn Lyapunov,
    spec: &SampleSpec,
) -> ViolationReport {
    let g = model.growth();
    let gamma = lyap.params().gamma;
    let mut report = ViolationReport::new();
    for x in spec.points(model.dim_state()) {
        let (nb, ns) = coefficient_norms(model, 0.0, &x);
        let bound = g.k * (1.0 + lyap.value(&x).powf(g.kappa * gamma));
        report.record(&x, ratio(nb.max(ns), bound));
    }
    report.finish()
}

/// `V(x) > 0` for every sampled `x ≠ 0` and `V(0) = 0`.
pub fn check_kernel(lyap: &dyn Lyapunov, d: usize, spec: &SampleSpec) -> bool {
    spec.points(d).iter().all(|x| {
        let v = lyap.value(x);
        if x.iter().all(|c| *c == 0.0) {
            v == 0.0
        } else {
            v > 0.0
        }
    })
}

/// Right-hand side of the drift inequality `L V ≤ …`.
#[derive(Clone, Copy)]
pub enum DriftForm<'a> {
    /// `L V ≤ ρ(1 + V)`.
    LeRhoOnePlusV(f64),
    /// `L V ≤ −z`.
    LeMinusZ(ScalarFn<'a>),
    /// `L V ≤ −ρV`.
    LeMinusRhoV(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    /// Largest `L V − RHS` over the samples.
    pub max_margin: f64,
    /// Largest `(L V − RHS) / (1 + |RHS|)`.
    pub max_relative_margin: f64,
    pub worst_x: Vec<f64>,
    pub pass: bool,
    pub n_samples: usize,
    pub tolerance: f64,
}

/// Sampled check of `L V ≤ RHS` for the given coefficients. A relative
/// tolerance absorbs rounding where the inequality is an identity.
pub fn check_lyapunov_drift(
    coeffs: &dyn SdeModel,
    lyap: &dyn Lyapunov,
    form: DriftForm<'_>,
    spec: &SampleSpec,
) -> Result<DriftReport> {
    let mut rep = DriftReport {
        max_margin: f64::NEG_INFINITY,
        max_relative_margin: f64::NEG_INFINITY,
        worst_x: Vec::new(),
        pass: true,
        n_samples: 0,
        tolerance: RATIO_TOLERANCE,
    };
    for x in spec.points(coeffs.dim_state()) {
        let lv = diffusion_operator(coeffs, lyap, 0.0, &x)?;
        let rhs = match form {
            DriftForm::LeRhoOnePlusV(rho) => rho * (1.0 + lyap.value(&x)),
            DriftForm::LeMinusZ(z) => -z(&x),
            DriftForm::LeMinusRhoV(rho) => -rho * lyap.value(&x),
        };
        let margin = lv - rhs;
        let rel = margin / (1.0 + rhs.abs());
        rep.n_samples += 1;
        if rel > rep.max_relative_margin {
            rep.max_relative_margin = rel;
            rep.worst_x = x.clone();
        }
        rep.max_margin = rep.max_margin.max(margin);
    }
    rep.pass = rep.max_relative_margin <= rep.tolerance;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::TamedCoefficients;
    use crate::sde::builtin::{Cubic, Zero};
    use crate::sde::lyapunov::NormPower;

    #[test]
    fn balanced_example_values() {
        let g = GrowthProfile {
            k: 1.0,
            kappa: 2.0,
            ..GrowthProfile::default()
        };
        let plan = BalancedTaming::derive(0.5, &g, 1.0, 0.25).unwrap();
        assert_eq!(plan.c, 1.0);
        assert_eq!(plan.kappa_star, 1.0);
        let gs = plan.g_sigma(4.0, 0.01);
        assert!((gs - 2.0 * 0.01f64.powf(0.25)).abs() < 1e-15);
        assert!((gs - 0.6325).abs() < 1e-4);
        assert_eq!(plan.g_sigma(0.0, 0.01), 0.0);
    }

    #[test]
    fn balanced_guards_name_inequality() {
        let g = GrowthProfile {
            k: 4.0,
            kappa: 3.0,
            ..GrowthProfile::default()
        };
        let base = BalancedTaming::derive(0.5, &g, 1.0, 0.25).unwrap();
        let e = base.with_c(2.0).validate(&g).unwrap_err().to_string();
        assert!(e.contains("C ≥ (K/μ) ∨ 1"), "{e}");
        let e = base.with_kappa_star(1.0).validate(&g).unwrap_err().to_string();
        assert!(e.contains("κ* ≥ κ − 1"), "{e}");
    }

    #[test]
    fn stability_guard() {
        let c = stability_taming_constant(1.0, 1.0, 1.0, 0.0625).unwrap();
        assert!((c - 2.0).abs() < 1e-15);
        assert!(matches!(
            stability_taming_constant(0.5, 1.0, 1.0, 0.1),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn projection_exponents() {
        let cubic = Cubic.growth();
        let r = derive_projection_exponent(ProjectionPurpose::L2Rate, 0.5, &cubic);
        assert!((r.bound - 0.25).abs() < 1e-15 && (r.r - 0.225).abs() < 1e-15);
        let g = GrowthProfile {
            kappa1: 3.0,
            kappa2: 3.0,
            ..GrowthProfile::default()
        };
        let r = derive_projection_exponent(ProjectionPurpose::VExpStability, 0.5, &g);
        assert!((r.bound - 0.125).abs() < 1e-15 && (r.r - 0.1125).abs() < 1e-15);
        let r = derive_projection_exponent(ProjectionPurpose::L2Rate, 0.5, &GrowthProfile::default());
        assert!(r.unconstrained);
    }

    #[test]
    fn rho_tilde_and_mu() {
        let v = compute_rho_tilde(2.0, 2, 1, 0.1, RhoTildeMode::Remark).unwrap();
        assert!((v - 0.02).abs() < 1e-15);
        let v = compute_rho_tilde(2.0, 4, 1, 0.1, RhoTildeMode::ExactSum).unwrap();
        assert!((v - 0.01205).abs() < 1e-15);
        assert!(compute_rho_tilde(2.0, 2, 1, 1.5, RhoTildeMode::Remark).is_err());
        assert_eq!(compute_mu_threshold(2.0, 2, 1, None), 1.0);
        assert_eq!(compute_mu_threshold(2.0, 2, 1, Some(4.0)), 2.0);
        assert!((compute_mu_threshold(2.0, 3, 1, None) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn h_thresholds() {
        let h = derive_h_threshold(HThresholdRule::AsStabilityBalanced {
            mu: 1.0,
            lambda: 1.0,
            k: 1.0,
        });
        assert_eq!(h, 1.0);
        let h = derive_h_threshold(HThresholdRule::NoiseTruncation {
            mu: 1e-9,
            alpha: 0.5,
        });
        assert_eq!(h, 1.0);
        let h = derive_h_threshold(HThresholdRule::NoiseTruncation { mu: 1.0, alpha: 0.5 });
        assert!(h > 0.0 && h < 1.0);
        assert!(noise_truncation_lhs(h, 0.5) <= 1.0 + 1e-9);
        assert!(noise_truncation_lhs(1.01 * h, 0.5) > 1.0);
    }

    #[test]
    fn untamed_cubic_fails_integrability_near_boundary() {
        let spec = SampleSpec::default().with_counts(2000, 10);
        let r = check_taming_conditions(
            &Cubic,
            &NormPower::squared(),
            TamingCondition::integrability(),
            1.0,
            0.01,
            &spec,
            ConditionAux::default(),
        )
        .unwrap();
        assert!(!r.pass);
        assert!(norm(&r.worst_x) > 9.0, "{:?}", r.worst_x);
    }

    #[test]
    fn zero_model_passes_everything() {
        let spec = SampleSpec::default().with_counts(200, 10);
        let r = check_taming_conditions(
            &Zero { d: 2, m: 2 },
            &NormPower::squared(),
            TamingCondition::integrability(),
            1e-6,
            0.5,
            &spec,
            ConditionAux::default(),
        )
        .unwrap();
        assert!(r.pass && r.max_ratio == 0.0);
    }

    #[test]
    fn worked_taming_bounds_the_drift() {
        // G = (K/√μ) V^{κ₀/2} h^{1/2}, κ₀ = 2: |b^h| h^{1/2} ≤ √μ V^{1/2} on the cubic
        let mu: f64 = 0.5;
        let c = 1.0 / mu.sqrt();
        let tamed = TamedCoefficients::new(
            Arc::new(Cubic),
            Taming::single(move |x: &[f64], h: f64| c * x[0] * x[0] * h.sqrt()),
        );
        let pts = SampleSpec::default().with_counts(5000, 50).with_radius(100.0).points(1);
        for &h in &[1e-4, 0.01, 0.3] {
            for x in &pts {
                let mut b = [0.0];
                tamed.tamed_drift(0.0, x, h, &mut b);
                assert!(b[0].abs() * h.sqrt() <= mu.sqrt() * x[0].abs() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn cubic_drift_is_an_identity() {
        let spec = SampleSpec::default().with_counts(2000, 50);
        let z = |x: &[f64]| x[0].powi(4);
        let r = check_lyapunov_drift(&Cubic, &NormPower::squared(), DriftForm::LeMinusZ(&z), &spec)
            .unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.max_relative_margin.abs() < 1e-12);
    }
}
