use std::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::{hs_norm, norm, norm_sq};
use crate::sampling::SampleSpec;

/// Subclass of the derivative-bounded Lyapunov family a function belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LyapunovClass {
    General,
    /// `V^{(p+1)} ≡ 0`.
    Hat,
    /// `|·|^p`-like: `‖V^{(s)}‖ ≤ c V^{1-s/p}` and `V^{(p+1)} ≡ 0`.
    Bar,
}

/// Parameters `(p, γ, c)` of the bound `‖V^{(s)}‖_HS ≤ c(1+V)^{1-sγ}` for `s ≤ p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovParams {
    pub p: u32,
    pub gamma: f64,
    pub c: f64,
    pub class: LyapunovClass,
    pub monotone_radial: bool,
}

/// A Lyapunov function with analytic derivatives.
pub trait Lyapunov: Send + Sync {
    fn params(&self) -> LyapunovParams;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], out: &mut [f64]);

    /// Row-major `d × d` Hessian.
    fn hessian(&self, x: &[f64], out: &mut [f64]);

    /// `‖V^{(s)}(x)‖_HS` for `3 ≤ s`, when the family knows it.
    fn derivative_hs_norm(&self, _x: &[f64], _s: u32) -> Option<f64> {
        None
    }

    /// Dominating function `U ≥ V`, if one is attached.
    fn dominating(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    fn name(&self) -> &str {
        "custom"
    }
}

impl fmt::Debug for dyn Lyapunov {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Lyapunov")
            .field("name", &self.name())
            .field("params", &self.params())
            .finish()
    }
}

/// `‖V^{(s)}(x)‖_HS` for any `s ≥ 1`: gradient and Hessian are used for
/// `s = 1, 2`; higher orders defer to the family.
pub fn derivative_norm(lyap: &dyn Lyapunov, x: &[f64], s: u32) -> Option<f64> {
    let d = x.len();
    match s {
        0 => Some(lyap.value(x)),
        1 => {
            let mut g = vec![0.0; d];
            lyap.gradient(x, &mut g);
            Some(norm(&g))
        }
        2 => {
            let mut h = vec![0.0; d * d];
            lyap.hessian(x, &mut h);
            Some(hs_norm(&h))
        }
        _ => lyap.derivative_hs_norm(x, s),
    }
}

/// `V(x) = |x|^p`.
#[derive(Debug, Clone, Copy)]
pub struct NormPower {
    p: f64,
    c: f64,
}

impl NormPower {
    /// `c` is the derivative-bound constant; see [`estimate_derivative_constant`].
    pub fn new(p: f64, c: f64) -> Self {
        assert!(p >= 2.0, "norm-power Lyapunov function needs p >= 2");
        NormPower { p, c }
    }

    /// `|x|²` with `c = 2`, the constant for `d = 1` (the Hessian `2I` has
    /// HS norm `2√d`).
    pub fn squared() -> Self {
        NormPower { p: 2.0, c: 2.0 }
    }

    pub fn exponent(&self) -> f64 {
        self.p
    }

    fn is_even_integer(&self) -> bool {
        self.p.fract() == 0.0 && (self.p as u64).is_multiple_of(2)
    }
}

impl Lyapunov for NormPower {
    fn params(&self) -> LyapunovParams {
        let even = self.is_even_integer();
        LyapunovParams {
            p: self.p.floor() as u32,
            gamma: 1.0 / self.p,
            c: self.c,
            class: if even {
                LyapunovClass::Bar
            } else {
                LyapunovClass::General
            },
            monotone_radial: true,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        if self.p == 2.0 {
            norm_sq(x)
        } else {
            norm(x).powf(self.p)
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        if self.p == 2.0 {
            for (o, xi) in out.iter_mut().zip(x) {
                *o = 2.0 * xi;
            }
            return;
        }
        let r = norm(x);
        let scale = if r == 0.0 {
            0.0
        } else {
            self.p * r.powf(self.p - 2.0)
        };
        for (o, xi) in out.iter_mut().zip(x) {
            *o = scale * xi;
        }
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        out.fill(0.0);
        if self.p == 2.0 {
            for i in 0..d {
                out[i * d + i] = 2.0;
            }
            return;
        }
        let r = norm(x);
        if r == 0.0 {
            return;
        }
        let a = self.p * r.powf(self.p - 2.0);
        let b = self.p * (self.p - 2.0) * r.powf(self.p - 4.0);
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = b * x[i] * x[j] + if i == j { a } else { 0.0 };
            }
        }
    }

    fn derivative_hs_norm(&self, x: &[f64], s: u32) -> Option<f64> {
        if self.p == 2.0 {
            return Some(0.0);
        }
        if x.len() != 1 {
            return None;
        }
        // |x|^p in one dimension: |p(p-1)...(p-s+1)| |x|^{p-s}
        let mut coef = 1.0;
        for k in 0..s {
            coef *= self.p - k as f64;
        }
        if coef == 0.0 {
            return Some(0.0);
        }
        Some(coef.abs() * x[0].abs().powf(self.p - s as f64))
    }

    fn dominating(&self, x: &[f64]) -> Option<f64> {
        Some(self.value(x))
    }

    fn name(&self) -> &str {
        "norm-power"
    }
}

/// `V(x) = Σ cᵢ xᵢ^{pᵢ}` with integer powers. `V^{(s)}` is diagonal, so all
/// derivative norms are exact.
#[derive(Debug, Clone)]
pub struct WeightedPoly {
    coeffs: Vec<f64>,
    powers: Vec<u32>,
    gamma: f64,
    c: f64,
}

impl WeightedPoly {
    /// `γ` defaults to `1 / max pᵢ`.
    pub fn new(coeffs: Vec<f64>, powers: Vec<u32>, c: f64) -> Self {
        assert_eq!(coeffs.len(), powers.len());
        let p = powers.iter().copied().max().unwrap_or(2).max(2);
        WeightedPoly {
            coeffs,
            powers,
            gamma: 1.0 / p as f64,
            c,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// `x₁⁴ + 2x₂²` with `c = 24`.
    pub fn vdp() -> Self {
        WeightedPoly::new(vec![1.0, 2.0], vec![4, 2], 24.0)
    }

    fn falling(p: u32, s: u32) -> f64 {
        (0..s).map(|k| (p - k) as f64).product()
    }

    fn component_derivative(&self, i: usize, xi: f64, s: u32) -> f64 {
        let p = self.powers[i];
        if s > p {
            return 0.0;
        }
        self.coeffs[i] * Self::falling(p, s) * xi.powi((p - s) as i32)
    }
}

impl Lyapunov for WeightedPoly {
    fn params(&self) -> LyapunovParams {
        let p = self.powers.iter().copied().max().unwrap_or(2).max(2);
        LyapunovParams {
            p,
            gamma: self.gamma,
            c: self.c,
            class: LyapunovClass::Hat,
            monotone_radial: false,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, xi)| self.coeffs[i] * xi.powi(self.powers[i] as i32))
            .sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.component_derivative(i, x[i], 1);
        }
    }

    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        out.fill(0.0);
        for i in 0..d {
            out[i * d + i] = self.component_derivative(i, x[i], 2);
        }
    }

    fn derivative_hs_norm(&self, x: &[f64], s: u32) -> Option<f64> {
        Some(
            x.iter()
                .enumerate()
                .map(|(i, xi)| self.component_derivative(i, *xi, s).powi(2))
                .sum::<f64>()
                .sqrt(),
        )
    }

    fn dominating(&self, x: &[f64]) -> Option<f64> {
        Some(self.value(x))
    }

    fn name(&self) -> &str {
        "weighted-poly"
    }
}

/// Sum of two Lyapunov functions; derivatives add.
pub struct SumLyapunov<A, B>(pub A, pub B);

impl<A: Lyapunov, B: Lyapunov> Lyapunov for SumLyapunov<A, B> {
    fn params(&self) -> LyapunovParams {
        let (a, b) = (self.0.params(), self.1.params());
        LyapunovParams {
            p: a.p.max(b.p),
            gamma: a.gamma.min(b.gamma),
            c: a.c + b.c,
            class: LyapunovClass::General,
            monotone_radial: false,
        }
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.0.value(x) + self.1.value(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.0.gradient(x, out);
        self.1.gradient(x, &mut tmp);
        out.iter_mut().zip(tmp).for_each(|(o, t)| *o += t);
    }
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.0.hessian(x, out);
        self.1.hessian(x, &mut tmp);
        out.iter_mut().zip(tmp).for_each(|(o, t)| *o += t);
    }
}

/// Candidate `c` for the derivative bound: the largest observed
/// `‖V^{(s)}‖_HS / (1+V)^{1-sγ}` over the sample, for every `s ≤ p` the
/// family can evaluate.
pub fn estimate_derivative_constant(lyap: &dyn Lyapunov, d: usize, spec: &SampleSpec) -> f64 {
    let params = lyap.params();
    let mut best: f64 = 0.0;
    for x in spec.points(d) {
        let v = lyap.value(&x);
        for s in 1..=params.p {
            if let Some(n) = derivative_norm(lyap, &x, s) {
                let denom = (1.0 + v).powf(1.0 - s as f64 * params.gamma);
                best = best.max(n / denom);
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeBoundReport {
    /// Largest `‖V^{(s)}‖ / (c (1+V)^{1-sγ})` per order `s = 1..=p`;
    /// `None` marks an order the family cannot evaluate ("not verified").
    pub max_ratio_by_order: Vec<Option<f64>>,
    pub pass: bool,
}

/// Sampled check of the derivative bound with the function's own `c`.
pub fn check_derivative_bound(
    lyap: &dyn Lyapunov,
    d: usize,
    spec: &SampleSpec,
) -> DerivativeBoundReport {
    let params = lyap.params();
    let mut ratios: Vec<Option<f64>> = vec![Some(0.0); params.p as usize];
    for x in spec.points(d) {
        let v = lyap.value(&x);
        for s in 1..=params.p {
            let slot = &mut ratios[(s - 1) as usize];
            match derivative_norm(lyap, &x, s) {
                Some(n) => {
                    let bound = params.c * (1.0 + v).powf(1.0 - s as f64 * params.gamma);
                    if let Some(r) = slot {
                        *r = r.max(n / bound);
                    }
                }
                None => *slot = None,
            }
        }
    }
    let pass = ratios.iter().flatten().all(|r| *r <= 1.0 + 1e-9);
    DerivativeBoundReport {
        max_ratio_by_order: ratios,
        pass,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdPoint {
    pub x: Vec<f64>,
    pub gradient_deviation: f64,
    pub hessian_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdReport {
    pub points: Vec<FdPoint>,
    pub max_gradient_deviation: f64,
    pub max_hessian_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub const FD_TOLERANCE: f64 = 1e-5;

/// Compares the analytic gradient against central differences of `value`
/// and the Hessian against central differences of the gradient. Deviations
/// are `|fd - exact| / (1 + |exact|)`, maximised over components.
pub fn finite_difference_check(lyap: &dyn Lyapunov, points: &[Vec<f64>]) -> FdReport {
    let mut out = Vec::with_capacity(points.len());
    for x in points {
        let d = x.len();
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        lyap.gradient(x, &mut grad);
        lyap.hessian(x, &mut hess);

        let mut gdev: f64 = 0.0;
        let mut y = x.clone();
        for i in 0..d {
            let e = 1e-6 * x[i].abs().max(1.0);
            y[i] = x[i] + e;
            let fp = lyap.value(&y);
            y[i] = x[i] - e;
            let fm = lyap.value(&y);
            y[i] = x[i];
            let fd = (fp - fm) / (2.0 * e);
            gdev = gdev.max((fd - grad[i]).abs() / (1.0 + grad[i].abs()));
        }

        let mut hdev: f64 = 0.0;
        let mut gp = vec![0.0; d];
        let mut gm = vec![0.0; d];
        for j in 0..d {
            let e = 1e-6 * x[j].abs().max(1.0);
            y[j] = x[j] + e;
            lyap.gradient(&y, &mut gp);
            y[j] = x[j] - e;
            lyap.gradient(&y, &mut gm);
            y[j] = x[j];
            for i in 0..d {
                let fd = (gp[i] - gm[i]) / (2.0 * e);
                let exact = hess[i * d + j];
                hdev = hdev.max((fd - exact).abs() / (1.0 + exact.abs()));
            }
        }
        out.push(FdPoint {
            x: x.clone(),
            gradient_deviation: gdev,
            hessian_deviation: hdev,
        });
    }
    let max_g = out.iter().map(|p| p.gradient_deviation).fold(0.0, f64::max);
    let max_h = out.iter().map(|p| p.hessian_deviation).fold(0.0, f64::max);
    FdReport {
        points: out,
        max_gradient_deviation: max_g,
        max_hessian_deviation: max_h,
        tolerance: FD_TOLERANCE,
        pass: max_g <= FD_TOLERANCE && max_h <= FD_TOLERANCE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squared_norm_fd_is_exact_enough() {
        let r = finite_difference_check(&NormPower::squared(), &[vec![3.0, 4.0]]);
        assert!(r.max_gradient_deviation < 1e-8, "{r:?}");
        assert!(r.pass);
    }

    #[test]
    fn vdp_gradient_at_ones() {
        let v = WeightedPoly::vdp();
        let mut g = [0.0; 2];
        v.gradient(&[1.0, 1.0], &mut g);
        assert_eq!(g, [4.0, 4.0]);
        let r = finite_difference_check(&v, &[vec![1.0, 1.0]]);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn vdp_hessian_at_origin() {
        let mut h = [0.0; 4];
        WeightedPoly::vdp().hessian(&[0.0, 0.0], &mut h);
        assert_eq!(h, [0.0, 0.0, 0.0, 4.0]);
    }

    #[test]
    fn positive_away_from_origin() {
        let spec = SampleSpec::default().with_counts(500, 50);
        for x in spec.points(2) {
            if x.iter().any(|v| *v != 0.0) {
                assert!(NormPower::squared().value(&x) > 0.0);
                assert!(WeightedPoly::vdp().value(&x) > 0.0);
            }
        }
        assert_eq!(WeightedPoly::vdp().value(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn derivative_bounds_hold_for_builtins() {
        let spec = SampleSpec::default().with_counts(2000, 50);
        let r = check_derivative_bound(&NormPower::squared(), 1, &spec);
        assert!(r.pass, "{r:?}");
        // the Hessian 2I has HS norm 2√d
        let r = check_derivative_bound(&NormPower::new(2.0, 2.0 * 3f64.sqrt()), 3, &spec);
        assert!(r.pass, "{r:?}");
        assert!(!check_derivative_bound(&NormPower::squared(), 3, &spec).pass);
        let r = check_derivative_bound(&WeightedPoly::vdp(), 2, &spec);
        assert!(r.pass, "{r:?}");
        assert!(r.max_ratio_by_order.iter().all(|v| v.is_some()));
        // |x|^4 in 3-d has no closed-form third derivative here
        let r = check_derivative_bound(&NormPower::new(4.0, 100.0), 3, &spec);
        assert_eq!(r.max_ratio_by_order[2], None);
    }

    #[test]
    fn estimated_constant_for_squared_norm() {
        let spec = SampleSpec::default().with_counts(2000, 50);
        let c = estimate_derivative_constant(&NormPower::squared(), 1, &spec);
        assert!((c - 2.0).abs() < 1e-12, "{c}");
        let c = estimate_derivative_constant(&NormPower::squared(), 2, &spec);
        assert!((c - 2.0 * 2f64.sqrt()).abs() < 1e-12, "{c}");
    }

    #[test]
    fn fourth_power_fd_in_three_dims() {
        let v = NormPower::new(4.0, 24.0);
        let pts = vec![vec![0.3, -1.2, 2.0], vec![5.0, 1.0, -7.0]];
        let r = finite_difference_check(&v, &pts);
        assert!(r.pass, "{r:?}");
    }
}
