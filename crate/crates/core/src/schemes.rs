//! One-step maps: standard, balanced (tamed), projected, composed and
//! noise-truncated explicit Euler.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::sde::model::SdeModel;

pub type GFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// A pair of taming functions `(G_b, G_σ)` of `(x, h)`.
#[derive(Clone)]
pub struct Taming {
    g_b: GFn,
    g_sigma: GFn,
    case_i_exact: bool,
}

impl fmt::Debug for Taming {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Taming")
            .field("case_i_exact", &self.case_i_exact)
            .finish_non_exhaustive()
    }
}

impl Taming {
    pub fn new<B, S>(g_b: B, g_sigma: S) -> Self
    where
        B: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
        S: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        Taming {
            g_b: Arc::new(g_b),
            g_sigma: Arc::new(g_sigma),
            case_i_exact: false,
        }
    }

    pub fn identity() -> Self {
        let mut t = Taming::new(|_, _| 0.0, |_, _| 0.0);
        t.case_i_exact = true;
        t
    }

    /// `G_b = 2G_σ + G_σ²`, so that `1 + G_b = (1 + G_σ)²`.
    pub fn case_i<S>(g_sigma: S) -> Self
    where
        S: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        let g_sigma: GFn = Arc::new(g_sigma);
        let gs = g_sigma.clone();
        Taming {
            g_b: Arc::new(move |x, h| {
                let g = gs(x, h);
                2.0 * g + g * g
            }),
            g_sigma,
            case_i_exact: true,
        }
    }

    /// Case (i) parametrised by `G_b`: `G_σ = √(1 + G_b) − 1`.
    pub fn case_i_from_drift<B>(g_b: B) -> Self
    where
        B: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        let g_b: GFn = Arc::new(g_b);
        let gb = g_b.clone();
        Taming {
            g_b,
            g_sigma: Arc::new(move |x, h| (1.0 + gb(x, h)).sqrt() - 1.0),
            case_i_exact: true,
        }
    }

    /// The same `G` for drift and diffusion.
    pub fn single<G>(g: G) -> Self
    where
        G: Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    {
        let g: GFn = Arc::new(g);
        Taming {
            g_b: g.clone(),
            g_sigma: g,
            case_i_exact: false,
        }
    }

    /// `G_b = G_σ = G(x) h^α`.
    pub fn single_power<G>(g: G, alpha: f64) -> Self
    where
        G: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Taming::single(move |x, h| g(x) * h.powf(alpha))
    }

    pub fn g_b(&self, x: &[f64], h: f64) -> f64 {
        (self.g_b)(x, h)
    }

    pub fn g_sigma(&self, x: &[f64], h: f64) -> f64 {
        (self.g_sigma)(x, h)
    }

    pub fn case_i_exact(&self) -> bool {
        self.case_i_exact
    }
}

/// A model together with its taming.
#[derive(Clone)]
pub struct TamedCoefficients {
    base: Arc<dyn SdeModel>,
    taming: Taming,
}

impl fmt::Debug for TamedCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TamedCoefficients")
            .field("base", &self.base.name())
            .field("taming", &self.taming)
            .finish()
    }
}

impl TamedCoefficients {
    pub fn new(base: Arc<dyn SdeModel>, taming: Taming) -> Self {
        TamedCoefficients { base, taming }
    }

    pub fn base(&self) -> &Arc<dyn SdeModel> {
        &self.base
    }

    pub fn taming(&self) -> &Taming {
        &self.taming
    }

    pub fn tamed_drift(&self, t: f64, x: &[f64], h: f64, out: &mut [f64]) {
        self.base.drift(t, x, out);
        let den = 1.0 + self.taming.g_b(x, h);
        out.iter_mut().for_each(|v| *v /= den);
    }

    pub fn tamed_diffusion(&self, t: f64, x: &[f64], h: f64, out: &mut [f64]) {
        self.base.diffusion(t, x, out);
        let den = 1.0 + self.taming.g_sigma(x, h);
        out.iter_mut().for_each(|v| *v /= den);
    }

    /// The tamed pair frozen at step size `h`, usable wherever a model is.
    pub fn at_step(&self, h: f64) -> TamedAt<'_> {
        TamedAt { tamed: self, h }
    }
}

pub struct TamedAt<'a> {
    tamed: &'a TamedCoefficients,
    h: f64,
}

impl SdeModel for TamedAt<'_> {
    fn dim_state(&self) -> usize {
        self.tamed.base.dim_state()
    }
    fn dim_noise(&self) -> usize {
        self.tamed.base.dim_noise()
    }
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.tamed.tamed_drift(t, x, self.h, out)
    }
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.tamed.tamed_diffusion(t, x, self.h, out)
    }
    fn growth(&self) -> crate::sde::GrowthProfile {
        self.tamed.base.growth()
    }
    fn time_homogeneous(&self) -> bool {
        self.tamed.base.time_homogeneous()
    }
    fn vanishes_at_origin(&self) -> bool {
        self.tamed.base.vanishes_at_origin()
    }
    fn name(&self) -> &str {
        self.tamed.base.name()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionVariant {
    /// `Πx = min{1, h^{-r}/|x|} x`.
    #[default]
    Radial,
    /// Each coordinate clamped to `[-h^{-r}/√d, h^{-r}/√d]`. Leaves `x`
    /// unchanged only when every `|xᵢ| ≤ h^{-r}/√d`, which is stricter than
    /// `|x| ≤ h^{-r}`.
    Componentwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    pub r: f64,
    #[serde(default)]
    pub variant: ProjectionVariant,
}

impl ProjectionConfig {
    pub fn radial(r: f64) -> Self {
        ProjectionConfig {
            r,
            variant: ProjectionVariant::Radial,
        }
    }

    pub fn componentwise(r: f64) -> Self {
        ProjectionConfig {
            r,
            variant: ProjectionVariant::Componentwise,
        }
    }

    pub fn radius(&self, h: f64) -> f64 {
        h.powf(-self.r)
    }

    pub fn project(&self, x: &[f64], h: f64) -> Vec<f64> {
        let mut y = x.to_vec();
        project_in_place(&mut y, self.radius(h), self.variant);
        y
    }
}

/// Projects onto the ball of radius `radius`; the result satisfies
/// `norm(x) <= radius` in floating point, not just in exact arithmetic.
pub fn project_in_place(x: &mut [f64], radius: f64, variant: ProjectionVariant) {
    match variant {
        ProjectionVariant::Radial => {
            let mut n = norm(x);
            if n.is_infinite() && x.iter().all(|v| v.is_finite()) {
                let mx = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                n = mx * x.iter().map(|v| (v / mx).powi(2)).sum::<f64>().sqrt();
            }
            // non-finite input is left alone so the caller sees the divergence
            if n <= radius || !n.is_finite() {
                return;
            }
            let orig = x.to_vec();
            let mut s = radius / n;
            loop {
                for (v, o) in x.iter_mut().zip(&orig) {
                    *v = o * s;
                }
                if norm(x) <= radius {
                    break;
                }
                s *= 1.0 - f64::EPSILON;
            }
        }
        ProjectionVariant::Componentwise => {
            let c = componentwise_bound(radius, x.len());
            for v in x.iter_mut() {
                *v = v.clamp(-c, c);
            }
        }
    }
}

fn componentwise_bound(radius: f64, d: usize) -> f64 {
    let mut c = radius / (d as f64).sqrt();
    while norm(&vec![c; d]) > radius {
        c *= 1.0 - f64::EPSILON;
    }
    c
}

/// `A_h = √(2|log h|)`; rejected at `h = 1` where it kills all noise.
pub fn truncation_level(h: f64) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::config(format!(
            "noise truncation needs h ∈ (0,1), got h = {h} (A_h = 0 at h = 1)"
        )));
    }
    Ok((2.0 * h.ln().abs()).sqrt())
}

/// `ζ_h`: each component of `xi` clamped to `[-A_h, A_h]`.
pub fn truncate_noise(xi: &[f64], h: f64) -> Result<Vec<f64>> {
    let a = truncation_level(h)?;
    Ok(xi.iter().map(|v| v.clamp(-a, a)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Standard,
    Balanced,
    Projected,
    Composed,
    TruncatedNoise,
    TruncatedNoiseBalanced,
}

impl SchemeKind {
    pub fn uses_taming(self) -> bool {
        matches!(
            self,
            SchemeKind::Balanced | SchemeKind::Composed | SchemeKind::TruncatedNoiseBalanced
        )
    }

    pub fn uses_projection(self) -> bool {
        matches!(self, SchemeKind::Projected | SchemeKind::Composed)
    }

    pub fn truncates_noise(self) -> bool {
        matches!(
            self,
            SchemeKind::TruncatedNoise | SchemeKind::TruncatedNoiseBalanced
        )
    }
}

#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub taming: Option<Taming>,
    pub projection: Option<ProjectionConfig>,
    pub h: f64,
    pub t_end: f64,
}

impl SchemeConfig {
    pub fn new(kind: SchemeKind, h: f64, t_end: f64) -> Self {
        SchemeConfig {
            kind,
            taming: None,
            projection: None,
            h,
            t_end,
        }
    }

    pub fn with_taming(mut self, taming: Taming) -> Self {
        self.taming = Some(taming);
        self
    }

    pub fn with_projection(mut self, projection: ProjectionConfig) -> Self {
        self.projection = Some(projection);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h <= 1.0) {
            return Err(Error::config(format!("h ∈ (0,1] violated: h = {}", self.h)));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::config(format!("T > 0 violated: T = {}", self.t_end)));
        }
        if self.n_steps() < 1 {
            return Err(Error::config(format!(
                "⌊T/h⌋ ≥ 1 violated: T = {}, h = {}",
                self.t_end, self.h
            )));
        }
        if self.kind.uses_taming() && self.taming.is_none() {
            return Err(Error::config(format!(
                "scheme {:?} requires taming functions",
                self.kind
            )));
        }
        if self.kind.uses_projection() {
            match self.projection {
                None => {
                    return Err(Error::config(format!(
                        "scheme {:?} requires a projection",
                        self.kind
                    )))
                }
                Some(p) if !(p.r > 0.0) => {
                    return Err(Error::config(format!("r > 0 violated: r = {}", p.r)))
                }
                _ => {}
            }
        }
        if self.kind.truncates_noise() {
            truncation_level(self.h)?;
        }
        Ok(())
    }

    /// `⌊T/h⌋`, treating `T/h` within 1e-9 of an integer as that integer.
    pub fn n_steps(&self) -> usize {
        let q = self.t_end / self.h;
        let n = q.round();
        if (q - n).abs() <= 1e-9 * q.max(1.0) {
            n as usize
        } else {
            q.floor() as usize
        }
    }
}

/// Per-thread scratch buffers for [`Scheme::step`].
#[derive(Debug, Clone)]
pub struct Workspace {
    b: Vec<f64>,
    sigma: Vec<f64>,
    dw: Vec<f64>,
}

impl Workspace {
    pub fn new(d: usize, m: usize) -> Self {
        Workspace {
            b: vec![0.0; d],
            sigma: vec![0.0; d * m],
            dw: vec![0.0; m],
        }
    }
}

/// A validated scheme bound to a model.
#[derive(Clone)]
pub struct Scheme {
    model: Arc<dyn SdeModel>,
    config: SchemeConfig,
    n_steps: usize,
    radius: Option<f64>,
    noise_band: Option<f64>,
}

impl fmt::Debug for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scheme")
            .field("model", &self.model.name())
            .field("config", &self.config)
            .finish()
    }
}

impl Scheme {
    pub fn new(model: Arc<dyn SdeModel>, config: SchemeConfig) -> Result<Self> {
        config.validate()?;
        let radius = if config.kind.uses_projection() {
            config.projection.map(|p| p.radius(config.h))
        } else {
            None
        };
        let noise_band = if config.kind.truncates_noise() {
            Some(config.h.sqrt() * truncation_level(config.h)?)
        } else {
            None
        };
        Ok(Scheme {
            n_steps: config.n_steps(),
            model,
            config,
            radius,
            noise_band,
        })
    }

    pub fn model(&self) -> &Arc<dyn SdeModel> {
        &self.model
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn h(&self) -> f64 {
        self.config.h
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dim_state(&self) -> usize {
        self.model.dim_state()
    }

    pub fn dim_noise(&self) -> usize {
        self.model.dim_noise()
    }

    /// Radius `h^{-r}` of the projection ball, for projected kinds.
    pub fn projection_radius(&self) -> Option<f64> {
        self.radius
    }

    pub fn is_projected(&self) -> bool {
        self.radius.is_some()
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(self.dim_state(), self.dim_noise())
    }

    /// The starting state actually iterated: `X₀` itself, or `ΠX₀` for
    /// projected kinds.
    pub fn initial_state(&self, x0: &[f64]) -> Vec<f64> {
        let mut x = x0.to_vec();
        if let (Some(r), Some(p)) = (self.radius, self.config.projection) {
            project_in_place(&mut x, r, p.variant);
        }
        x
    }

    /// One step from `(t, x)` driven by the Brownian increment `dw`
    /// (already scaled by `√h`). Truncated kinds clamp `dw` to
    /// `±√h·A_h`, which equals `√h·ζ_h` for `dw = √h·ξ`.
    pub fn step(&self, t: f64, x: &[f64], dw: &[f64], out: &mut [f64], ws: &mut Workspace) {
        let h = self.config.h;
        self.model.drift(t, x, &mut ws.b);
        self.model.diffusion(t, x, &mut ws.sigma);
        let (db, ds) = match (&self.config.taming, self.config.kind.uses_taming()) {
            (Some(tm), true) => (1.0 + tm.g_b(x, h), 1.0 + tm.g_sigma(x, h)),
            _ => (1.0, 1.0),
        };
        let dw = match self.noise_band {
            Some(band) => {
                for (o, v) in ws.dw.iter_mut().zip(dw) {
                    *o = v.clamp(-band, band);
                }
                &ws.dw[..]
            }
            None => dw,
        };
        euler_into(x, &ws.b, &ws.sigma, dw, h, db, ds, out);
        if let (Some(r), Some(p)) = (self.radius, self.config.projection) {
            project_in_place(out, r, p.variant);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn euler_into(
    x: &[f64],
    b: &[f64],
    sigma: &[f64],
    dw: &[f64],
    h: f64,
    db: f64,
    ds: f64,
    out: &mut [f64],
) {
    let m = dw.len();
    for i in 0..x.len() {
        let mut acc = x[i] + (b[i] / db) * h;
        for j in 0..m {
            acc += (sigma[i * m + j] / ds) * dw[j];
        }
        out[i] = acc;
    }
}

fn raw_step(
    model: &dyn SdeModel,
    taming: Option<&Taming>,
    t: f64,
    x: &[f64],
    dw: &[f64],
    h: f64,
) -> Vec<f64> {
    let d = model.dim_state();
    let m = model.dim_noise();
    let mut b = vec![0.0; d];
    let mut sigma = vec![0.0; d * m];
    model.drift(t, x, &mut b);
    model.diffusion(t, x, &mut sigma);
    let (db, ds) = match taming {
        Some(tm) => (1.0 + tm.g_b(x, h), 1.0 + tm.g_sigma(x, h)),
        None => (1.0, 1.0),
    };
    let mut out = vec![0.0; d];
    euler_into(x, &b, &sigma, dw, h, db, ds, &mut out);
    out
}

/// `x + b(t,x) h + σ(t,x) dW`.
pub fn step_standard(model: &dyn SdeModel, t: f64, x: &[f64], dw: &[f64], h: f64) -> Vec<f64> {
    raw_step(model, None, t, x, dw, h)
}

/// `x + b/(1+G_b) h + σ/(1+G_σ) dW`.
pub fn step_balanced(tamed: &TamedCoefficients, t: f64, x: &[f64], dw: &[f64], h: f64) -> Vec<f64> {
    raw_step(tamed.base.as_ref(), Some(&tamed.taming), t, x, dw, h)
}

/// `Π(x + b h + σ dW)`.
pub fn step_projected(
    model: &dyn SdeModel,
    projection: &ProjectionConfig,
    t: f64,
    x: &[f64],
    dw: &[f64],
    h: f64,
) -> Vec<f64> {
    let mut y = raw_step(model, None, t, x, dw, h);
    project_in_place(&mut y, projection.radius(h), projection.variant);
    y
}

/// `Π` applied to the balanced step.
pub fn step_composed(
    tamed: &TamedCoefficients,
    projection: &ProjectionConfig,
    t: f64,
    x: &[f64],
    dw: &[f64],
    h: f64,
) -> Vec<f64> {
    let mut y = step_balanced(tamed, t, x, dw, h);
    project_in_place(&mut y, projection.radius(h), projection.variant);
    y
}

/// `x + b^h h + σ^h √h ζ_h` from the raw normal draw `xi`.
pub fn step_truncated_noise(
    tamed: &TamedCoefficients,
    t: f64,
    x: &[f64],
    xi: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let zeta = truncate_noise(xi, h)?;
    let sq = h.sqrt();
    let dw: Vec<f64> = zeta.iter().map(|z| sq * z).collect();
    Ok(step_balanced(tamed, t, x, &dw, h))
}
