use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Growth metadata of an SDE, expressed against a chosen Lyapunov function.
///
/// `kappa` is the integrability exponent (`|b| ∨ ‖σ‖ ≤ K(1 + V^{κγ})`),
/// `kappa1`/`kappa2` the stability exponents against a dominating `U`
/// (`|b| ≤ K U^{κ₁γ}`, `‖σ‖ ≤ K U^{κ₂γ}`), and `q1`, `q2`, `nu` describe
/// the polynomial growth of `U` (`U(x) ≤ ν(1 + |x|^q)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthProfile {
    pub k: f64,
    pub kappa: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub q1: f64,
    pub q2: f64,
    pub nu: f64,
}

impl GrowthProfile {
    pub fn kappa_check(&self) -> f64 {
        self.kappa1.max(self.kappa2)
    }

    pub fn q(&self) -> f64 {
        self.q1.max(self.q2)
    }
}

impl Default for GrowthProfile {
    fn default() -> Self {
        GrowthProfile {
            k: 1.0,
            kappa: 1.0,
            kappa1: 1.0,
            kappa2: 1.0,
            q1: 2.0,
            q2: 2.0,
            nu: 1.0,
        }
    }
}

/// An Itô SDE `dX = b(t, X) dt + σ(t, X) dW` on `R^d` driven by an
/// `m`-dimensional Wiener process.
///
/// Implementations must be pure: evaluations may happen concurrently from
/// many worker threads.
pub trait SdeModel: Send + Sync {
    fn dim_state(&self) -> usize;

    fn dim_noise(&self) -> usize;

    /// Writes `b(t, x)` into `out` (length `d`).
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// Writes `σ(t, x)` into `out` as a row-major `d × m` matrix.
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]);

    fn growth(&self) -> GrowthProfile {
        GrowthProfile::default()
    }

    fn time_homogeneous(&self) -> bool {
        true
    }

    /// `b(t, 0) = 0` and `σ(t, 0) = 0` for every `t`.
    fn vanishes_at_origin(&self) -> bool {
        false
    }

    fn name(&self) -> &str {
        "custom"
    }
}

impl fmt::Debug for dyn SdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeModel")
            .field("name", &self.name())
            .field("d", &self.dim_state())
            .field("m", &self.dim_noise())
            .finish()
    }
}

pub fn eval_drift(model: &dyn SdeModel, t: f64, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; model.dim_state()];
    model.drift(t, x, &mut out);
    out
}

pub fn eval_diffusion(model: &dyn SdeModel, t: f64, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; model.dim_state() * model.dim_noise()];
    model.diffusion(t, x, &mut out);
    out
}

type DriftFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// A model assembled from closures.
#[derive(Clone)]
pub struct FnModel {
    name: String,
    d: usize,
    m: usize,
    drift: Arc<DriftFn>,
    diffusion: Arc<DriftFn>,
    growth: GrowthProfile,
    time_homogeneous: bool,
    vanishes_at_origin: bool,
}

impl FnModel {
    pub fn new<B, S>(name: impl Into<String>, d: usize, m: usize, drift: B, diffusion: S) -> Self
    where
        B: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        S: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        FnModel {
            name: name.into(),
            d,
            m,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            growth: GrowthProfile::default(),
            time_homogeneous: true,
            vanishes_at_origin: false,
        }
    }

    pub fn with_growth(mut self, growth: GrowthProfile) -> Self {
        self.growth = growth;
        self
    }

    pub fn time_dependent(mut self) -> Self {
        self.time_homogeneous = false;
        self
    }

    pub fn vanishing_at_origin(mut self) -> Self {
        self.vanishes_at_origin = true;
        self
    }
}

impl SdeModel for FnModel {
    fn dim_state(&self) -> usize {
        self.d
    }
    fn dim_noise(&self) -> usize {
        self.m
    }
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, x, out)
    }
    fn growth(&self) -> GrowthProfile {
        self.growth
    }
    fn time_homogeneous(&self) -> bool {
        self.time_homogeneous
    }
    fn vanishes_at_origin(&self) -> bool {
        self.vanishes_at_origin
    }
    fn name(&self) -> &str {
        &self.name
    }
}
