//! Estimators that turn ensembles into checkable verdicts.

pub mod comparison;
pub mod regression;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::montecarlo::{FunctionalTrace, LevelError, PathEnsemble};

pub use comparison::{run_comparison, ComparisonReport, ComparisonSetup, HypothesisCheck};
pub use regression::{least_squares, LinearFit};

/// One verdict with the bound it was tested against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub observed: f64,
    pub bound: f64,
    /// `"le"`, `"ge"` or `"gt"`: how `observed` must compare to `bound`.
    pub relation: &'static str,
    pub detail: String,
}

/// Inputs that identify an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentInputs {
    pub model: String,
    pub scheme: String,
    pub h: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Per-step mean and standard error of one functional.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatisticSeries {
    pub name: String,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
}

impl StatisticSeries {
    pub fn from_trace(times: &[f64], trace: &FunctionalTrace) -> Self {
        StatisticSeries {
            name: trace.name.clone(),
            times: times.to_vec(),
            mean: trace.stats.iter().map(|s| s.mean).collect(),
            std_err: trace.stats.iter().map(|s| s.std_err).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub name: String,
    pub slope: f64,
    pub intercept: f64,
    pub half_width: f64,
    pub r_squared: f64,
    pub max_residual: f64,
    pub n_points: usize,
    /// Regression window in time, for rate fits.
    pub window: Option<Window>,
}

impl FitSummary {
    pub fn new(name: impl Into<String>, fit: &LinearFit, window: Option<Window>) -> Self {
        FitSummary {
            name: name.into(),
            slope: fit.slope,
            intercept: fit.intercept,
            half_width: fit.half_width,
            r_squared: fit.r_squared,
            max_residual: fit.max_residual,
            n_points: fit.n_points,
            window,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub kind: String,
    pub inputs: ExperimentInputs,
    pub statistics: Vec<StatisticSeries>,
    pub fits: Vec<FitSummary>,
    pub checks: Vec<CheckOutcome>,
    pub pass: bool,
    /// Wall-clock seconds; kept out of serialized output so reports are
    /// reproducible byte for byte.
    #[serde(skip)]
    pub runtime_seconds: f64,
}

impl ExperimentReport {
    pub fn new(kind: impl Into<String>, inputs: ExperimentInputs) -> Self {
        ExperimentReport {
            kind: kind.into(),
            inputs,
            statistics: Vec::new(),
            fits: Vec::new(),
            checks: Vec::new(),
            pass: true,
            runtime_seconds: 0.0,
        }
    }

    pub fn push(&mut self, c: CheckOutcome) {
        self.pass &= c.pass;
        self.checks.push(c);
    }
}

/// Parameters of `e^{(ρ+ρ̃)T}(1 + E V(X₀))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VBoundParams {
    pub rho: f64,
    pub rho_tilde: f64,
    pub t_end: f64,
    pub ev0: f64,
}

impl VBoundParams {
    pub fn bound(&self) -> f64 {
        ((self.rho + self.rho_tilde) * self.t_end).exp() * (1.0 + self.ev0)
    }
}

pub const DEFAULT_SE_MULTIPLIER: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VIntegrabilityReport {
    pub max_mean: f64,
    pub max_index: usize,
    pub std_err_at_max: f64,
    pub bound: f64,
    pub params: VBoundParams,
    /// Largest `(mean_k − bound)/SE_k` over the grid, the number of
    /// standard errors by which the worst step exceeds the bound.
    pub worst_excess_se: f64,
    pub divergence_fraction: f64,
    pub se_multiplier: f64,
    pub pass: bool,
}

impl VIntegrabilityReport {
    pub fn passes_at(&self, se_multiplier: f64) -> bool {
        self.divergence_fraction == 0.0 && self.worst_excess_se <= se_multiplier
    }

    pub fn outcome(&self) -> CheckOutcome {
        CheckOutcome {
            name: "v-integrability".into(),
            pass: self.pass,
            observed: self.max_mean,
            bound: self.bound + self.se_multiplier * self.std_err_at_max,
            relation: "le",
            detail: format!(
                "max_k E V = {} at step {}, bound e^((rho+rho~)T)(1+EV0) = {}, divergence fraction {}",
                self.max_mean, self.max_index, self.bound, self.divergence_fraction
            ),
        }
    }
}

/// Checks `E V(X̄_k) ≤ e^{(ρ+ρ̃)T}(1+EV₀) + 3 SE_k` at every grid step.
/// Any diverged path fails the check outright.
pub fn estimate_v_integrability(
    trace: &FunctionalTrace,
    divergence_fraction: f64,
    params: VBoundParams,
    se_multiplier: f64,
) -> VIntegrabilityReport {
    let bound = params.bound();
    let mut max_mean = f64::NEG_INFINITY;
    let mut max_index = 0;
    let mut worst_excess_se = f64::NEG_INFINITY;
    for (k, s) in trace.stats.iter().enumerate() {
        if s.n == 0 {
            continue;
        }
        if s.mean > max_mean || !max_mean.is_finite() {
            max_mean = s.mean;
            max_index = k;
        }
        let excess = s.mean - bound;
        let z = if s.std_err > 0.0 {
            excess / s.std_err
        } else if excess > 0.0 {
            f64::INFINITY
        } else if excess < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
        worst_excess_se = worst_excess_se.max(z);
    }
    if !max_mean.is_finite() {
        worst_excess_se = f64::INFINITY;
    }
    let std_err_at_max = trace.stats.get(max_index).map_or(0.0, |s| s.std_err);
    let mut r = VIntegrabilityReport {
        max_mean,
        max_index,
        std_err_at_max,
        bound,
        params,
        worst_excess_se,
        divergence_fraction,
        se_multiplier,
        pass: false,
    };
    r.pass = r.passes_at(se_multiplier);
    r
}

/// Fit window in absolute time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    /// `[0.2 T, T]`.
    pub fn burn_in(t_end: f64) -> Self {
        Window {
            start: 0.2 * t_end,
            end: t_end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub fit: LinearFit,
    pub slope: f64,
    pub half_width: f64,
    pub window: Window,
    /// The window was cut before a nonpositive mean.
    pub shortened: bool,
}

impl RateFit {
    /// Upper confidence bound of the slope is negative.
    pub fn decays(&self) -> bool {
        self.slope + self.half_width < 0.0
    }

    /// `decays()` and `slope ≤ −rate`.
    pub fn meets_rate(&self, rate: f64) -> bool {
        self.decays() && self.slope <= -rate
    }

    pub fn outcome(&self, min_rate: f64) -> CheckOutcome {
        CheckOutcome {
            name: "exponential-rate".into(),
            pass: self.meets_rate(min_rate),
            observed: self.slope,
            bound: -min_rate,
            relation: "le",
            detail: format!(
                "slope {} ± {} over t ∈ [{}, {}], R² = {}, {} points{}",
                self.slope,
                self.half_width,
                self.window.start,
                self.window.end,
                self.fit.r_squared,
                self.fit.n_points,
                if self.shortened { ", window shortened" } else { "" }
            ),
        }
    }
}

pub const MIN_RATE_POINTS: usize = 4;

/// Slope of `log E V(X̄_k)` against `t_k` over `window`.
pub fn fit_exponential_rate(times: &[f64], means: &[f64], window: Window) -> Result<RateFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut shortened = false;
    let mut end = window.end;
    for (&t, &m) in times.iter().zip(means) {
        if t < window.start - 1e-12 || t > window.end + 1e-12 {
            continue;
        }
        if !(m > 0.0) || !m.is_finite() {
            shortened = true;
            break;
        }
        xs.push(t);
        ys.push(m.ln());
        end = t;
    }
    if xs.len() < MIN_RATE_POINTS {
        return Err(Error::Estimation(format!(
            "{} usable points in the rate window, need {MIN_RATE_POINTS}",
            xs.len()
        )));
    }
    let fit = least_squares(&xs, &ys)?;
    Ok(RateFit {
        fit,
        slope: fit.slope,
        half_width: fit.half_width,
        window: Window {
            start: window.start,
            end: if shortened { end } else { window.end },
        },
        shortened,
    })
}

pub const DEFAULT_AS_EPSILON: f64 = 1e-3;
pub const DEFAULT_AS_MIN_FRACTION: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsStabilityReport {
    /// Paths with `|X̄_K| < ε`, over all paths.
    pub fraction: f64,
    pub converged: usize,
    pub n_paths: usize,
    pub diverged: usize,
    pub epsilon: f64,
    pub min_fraction: f64,
    pub median_terminal_norm: f64,
    pub max_terminal_norm: f64,
    #[serde(skip)]
    terminal_norms: Vec<f64>,
    pub pass: bool,
}

impl AsStabilityReport {
    pub fn passes_at(&self, epsilon: f64, min_fraction: f64) -> bool {
        let c = self.terminal_norms.iter().filter(|v| **v < epsilon).count();
        self.diverged == 0 && c as f64 >= min_fraction * self.n_paths as f64
    }

    pub fn outcome(&self) -> CheckOutcome {
        CheckOutcome {
            name: "as-stability".into(),
            pass: self.pass,
            observed: self.fraction,
            bound: self.min_fraction,
            relation: "ge",
            detail: format!(
                "{} of {} paths below {}, {} diverged, median |X_K| = {}",
                self.converged, self.n_paths, self.epsilon, self.diverged, self.median_terminal_norm
            ),
        }
    }
}

pub fn detect_as_stability(ens: &PathEnsemble, epsilon: f64, min_fraction: f64) -> AsStabilityReport {
    let diverged = ens.diverged_count();
    let mut norms: Vec<f64> = ens
        .terminal
        .iter()
        .zip(&ens.diverged)
        .map(|(x, d)| if d.is_some() { f64::INFINITY } else { norm(x) })
        .collect();
    let converged = norms.iter().filter(|v| **v < epsilon).count();
    norms.sort_by(f64::total_cmp);
    let median = norms.get(norms.len() / 2).copied().unwrap_or(f64::NAN);
    let max = norms.last().copied().unwrap_or(f64::NAN);
    let mut r = AsStabilityReport {
        fraction: converged as f64 / ens.n_paths.max(1) as f64,
        converged,
        n_paths: ens.n_paths,
        diverged,
        epsilon,
        min_fraction,
        median_terminal_norm: median,
        max_terminal_norm: max,
        terminal_norms: norms,
        pass: false,
    };
    r.pass = r.passes_at(epsilon, min_fraction);
    r
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongRateReport {
    pub fit: LinearFit,
    pub slope: f64,
    pub half_width: f64,
    /// Levels left out because their error was zero or not finite.
    pub excluded: Vec<f64>,
}

impl StrongRateReport {
    pub fn outcome(&self, lo: f64, hi: f64) -> CheckOutcome {
        let pass = self.slope >= lo && self.slope <= hi;
        CheckOutcome {
            name: "strong-rate".into(),
            pass,
            observed: self.slope,
            bound: if self.slope < lo { lo } else { hi },
            relation: if self.slope < lo { "ge" } else { "le" },
            detail: format!(
                "slope {} ± {} in [{lo}, {hi}], R² = {}, excluded levels {:?}",
                self.slope, self.half_width, self.fit.r_squared, self.excluded
            ),
        }
    }
}

pub const MIN_STRONG_LEVELS: usize = 4;

/// Log-log slope of RMS error against step size.
pub fn estimate_strong_rate(levels: &[LevelError]) -> Result<StrongRateReport> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = Vec::new();
    for l in levels {
        if l.rms > 0.0 && l.rms.is_finite() {
            xs.push(l.h.ln());
            ys.push(l.rms.ln());
        } else {
            excluded.push(l.h);
        }
    }
    if xs.len() < MIN_STRONG_LEVELS {
        return Err(Error::Estimation(format!(
            "{} usable levels, need {MIN_STRONG_LEVELS}",
            xs.len()
        )));
    }
    let fit = least_squares(&xs, &ys)?;
    Ok(StrongRateReport {
        fit,
        slope: fit.slope,
        half_width: fit.half_width,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonnegativityReport {
    pub negative_step_count: u64,
    pub first_violation: Option<(usize, usize)>,
    pub path_steps: u64,
    pub h: f64,
    pub h_threshold: Option<f64>,
    /// Set when the theorem's step-size hypothesis is not met.
    pub warning: Option<String>,
    pub pass: bool,
}

impl NonnegativityReport {
    pub fn outcome(&self) -> CheckOutcome {
        CheckOutcome {
            name: "nonnegativity".into(),
            pass: self.pass,
            observed: self.negative_step_count as f64,
            bound: 0.0,
            relation: "le",
            detail: format!(
                "{} negative iterates in {} path-steps{}",
                self.negative_step_count,
                self.path_steps,
                self.warning
                    .as_deref()
                    .map(|w| format!("; warning: {w}"))
                    .unwrap_or_default()
            ),
        }
    }
}

/// Exact count of negative iterates. The check runs even when `h` exceeds
/// the threshold; a warning is attached in that case.
pub fn check_nonnegativity(ens: &PathEnsemble, h: f64, h_threshold: Option<f64>) -> NonnegativityReport {
    let n_steps = ens.times.len().saturating_sub(1) as u64;
    let warning = match h_threshold {
        Some(th) if h > th => Some(format!(
            "h = {h} exceeds the positivity threshold {th}; theorem hypothesis unmet"
        )),
        _ => None,
    };
    NonnegativityReport {
        negative_step_count: ens.negative_steps,
        first_violation: ens.first_negative,
        path_steps: ens.n_paths as u64 * n_steps,
        h,
        h_threshold,
        warning,
        pass: ens.negative_steps == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::StepStats;

    fn trace(means: &[f64], se: f64) -> FunctionalTrace {
        FunctionalTrace {
            name: "mean_v".into(),
            stats: means
                .iter()
                .map(|m| StepStats {
                    n: 100,
                    mean: *m,
                    std_err: se,
                    max: *m,
                    sum: 100.0 * m,
                })
                .collect(),
        }
    }

    #[test]
    fn zero_model_bound() {
        let p = VBoundParams {
            rho: 0.0,
            rho_tilde: 0.0,
            t_end: 1.0,
            ev0: 1.0,
        };
        let r = estimate_v_integrability(&trace(&[1.0; 5], 0.0), 0.0, p, 3.0);
        assert_eq!(r.max_mean, 1.0);
        assert_eq!(r.bound, 2.0);
        assert!(r.pass);
    }

    #[test]
    fn divergence_fails_integrability() {
        let p = VBoundParams {
            rho: 0.0,
            rho_tilde: 0.0,
            t_end: 1.0,
            ev0: 1.0,
        };
        let r = estimate_v_integrability(&trace(&[1.0; 5], 0.0), 0.01, p, 3.0);
        assert!(!r.pass);
    }

    #[test]
    fn integrability_tolerance_is_monotone() {
        let p = VBoundParams {
            rho: 0.0,
            rho_tilde: 0.0,
            t_end: 1.0,
            ev0: 1.0,
        };
        let r = estimate_v_integrability(&trace(&[1.0, 2.1, 1.5], 0.02), 0.0, p, 3.0);
        assert!(!r.pass);
        assert!(r.passes_at(6.0));
        for (lo, hi) in [(1.0, 2.0), (2.0, 3.0), (3.0, 10.0)] {
            assert!(!r.passes_at(lo) || r.passes_at(hi));
        }
    }

    #[test]
    fn synthetic_exponential_rate() {
        let h = 1.0 / 128.0;
        let times: Vec<f64> = (0..=640).map(|k| k as f64 * h).collect();
        let means: Vec<f64> = times.iter().map(|t| (-2.0 * t).exp()).collect();
        let r = fit_exponential_rate(&times, &means, Window::burn_in(5.0)).unwrap();
        assert!((r.slope + 2.0).abs() < 1e-12);
        assert!(r.decays());
        assert!(!r.shortened);
    }

    #[test]
    fn rate_window_shortens_at_zero_mean() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        let mut means: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        means[8] = 0.0;
        let r = fit_exponential_rate(&times, &means, Window::burn_in(10.0)).unwrap();
        assert!(r.shortened);
        assert_eq!(r.window.end, 7.0);
        means[4] = 0.0;
        assert!(matches!(
            fit_exponential_rate(&times, &means, Window::burn_in(10.0)),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn synthetic_strong_rate() {
        let levels: Vec<LevelError> = (4..=9)
            .map(|j| {
                let h = 2f64.powi(-j);
                LevelError {
                    h,
                    rms: h.sqrt(),
                    std_err: 0.0,
                    n: 1,
                }
            })
            .collect();
        let r = estimate_strong_rate(&levels).unwrap();
        assert!((r.slope - 0.5).abs() < 1e-12);
        assert!(r.excluded.is_empty());
    }

    #[test]
    fn zero_error_level_is_excluded() {
        let mut levels: Vec<LevelError> = (4..=8)
            .map(|j| {
                let h = 2f64.powi(-j);
                LevelError {
                    h,
                    rms: h.sqrt(),
                    std_err: 0.0,
                    n: 1,
                }
            })
            .collect();
        levels[4].rms = 0.0;
        let r = estimate_strong_rate(&levels).unwrap();
        assert_eq!(r.excluded, vec![2f64.powi(-8)]);
        levels[3].rms = 0.0;
        assert!(estimate_strong_rate(&levels).is_err());
    }
}
