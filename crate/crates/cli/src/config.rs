//! Declarative experiment files. Unknown keys are rejected everywhere.

use serde::{Deserialize, Serialize};
use tamed_euler::montecarlo::InitialState;
use tamed_euler::sampling::SampleSpec;
use tamed_euler::schemes::{ProjectionConfig, SchemeKind};
use tamed_euler::sde::builtin::{LorenzParams, VanDerPolParams};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub model: ModelSpec,
    #[serde(default)]
    pub lyapunov: LyapunovSpec,
    pub scheme: SchemeSpec,
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Zero { d: usize, m: usize },
    Cubic {},
    Lorenz {
        alpha1: f64,
        alpha2: f64,
        beta1: f64,
        beta2: f64,
        beta3: f64,
    },
    Vdp { alpha1: f64, alpha2: f64, beta: f64 },
    Gbm { mu: f64, sigma: f64 },
    /// `ν x ≤ λ x` with shared `σ x`; only for comparison runs.
    LinearPair { nu: f64, lambda: f64, sigma: f64 },
}

impl ModelSpec {
    pub fn lorenz_params(&self) -> Option<LorenzParams> {
        match *self {
            ModelSpec::Lorenz {
                alpha1,
                alpha2,
                beta1,
                beta2,
                beta3,
            } => Some(LorenzParams {
                alpha1,
                alpha2,
                beta1,
                beta2,
                beta3,
            }),
            _ => None,
        }
    }

    pub fn vdp_params(&self) -> Option<VanDerPolParams> {
        match *self {
            ModelSpec::Vdp {
                alpha1,
                alpha2,
                beta,
            } => Some(VanDerPolParams {
                alpha1,
                alpha2,
                beta,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LyapunovSpec {
    /// `|x|²` with `c = 2√d`.
    #[default]
    NormSquared,
    NormPower { p: f64, c: f64 },
    /// `x₁⁴ + 2x₂²`.
    Vdp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    /// One experiment per step size.
    pub h: Vec<f64>,
    pub t_end: f64,
    #[serde(default)]
    pub taming: Option<TamingSpec>,
    #[serde(default)]
    pub projection: Option<ProjectionConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TamingSpec {
    /// `b/(1 + G)`, `σ/(1 + G)` with `G = coeff·|x|^power·h^alpha`.
    SinglePower { coeff: f64, power: f64, alpha: f64 },
    /// Case (i) balanced taming derived from the model growth profile.
    Balanced {
        mu: f64,
        #[serde(default = "quarter")]
        beta2: f64,
    },
    /// `G = C (V^{(κ₁−1)γ} ∨ V^{(κ₂−1)γ}) h^{1/4}`.
    Stability {
        kappa1: f64,
        kappa2: f64,
        gamma: f64,
        c: f64,
    },
}

fn quarter() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub n_paths: usize,
    pub seed: u64,
    pub x0: X0Spec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum X0Spec {
    Point(Vec<f64>),
    Distribution(InitialState),
}

impl X0Spec {
    pub fn initial_state(&self) -> InitialState {
        match self {
            X0Spec::Point(x) => InitialState::point(x.clone()),
            X0Spec::Distribution(s) => s.clone(),
        }
    }

    pub fn point(&self) -> Option<&[f64]> {
        match self {
            X0Spec::Point(x) => Some(x),
            X0Spec::Distribution(InitialState::Point { x }) => Some(x),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Expect {
    #[default]
    Pass,
    Fail,
}

impl Expect {
    pub fn is_default(&self) -> bool {
        *self == Expect::Pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    #[default]
    MeanV,
    MeanSqNorm,
}

impl Statistic {
    pub fn trace_name(self) -> &'static str {
        match self {
            Statistic::MeanV => "mean_v",
            Statistic::MeanSqNorm => "mean_sq_norm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CheckSpec {
    /// `max_k E V(X̄_k) ≤ e^{(ρ+ρ̃)T}(1 + E V(X₀)) + m·SE`.
    VIntegrability {
        rho: f64,
        /// Measured from the integrability condition when absent.
        #[serde(default)]
        rho_tilde: Option<f64>,
        #[serde(default = "three")]
        se_multiplier: f64,
        #[serde(default, skip_serializing_if = "Expect::is_default")]
        expect: Expect,
    },
    /// Slope of `log` statistic over `[burn_in·T, T]`.
    ExponentialRate {
        #[serde(default)]
        statistic: Statistic,
        #[serde(default)]
        min_rate: f64,
        #[serde(default = "burn_in")]
        burn_in: f64,
        #[serde(default, skip_serializing_if = "Expect::is_default")]
        expect: Expect,
    },
    /// Final value below `max_ratio` times the initial one.
    TerminalRatio {
        #[serde(default)]
        statistic: Statistic,
        max_ratio: f64,
        #[serde(default, skip_serializing_if = "Expect::is_default")]
        expect: Expect,
    },
    AsStability {
        #[serde(default = "as_epsilon")]
        epsilon: f64,
        #[serde(default = "as_fraction")]
        min_fraction: f64,
        #[serde(default, skip_serializing_if = "Expect::is_default")]
        expect: Expect,
    },
    /// Divergence fraction strictly above `above`.
    Divergence {
        above: f64,
        #[serde(default, skip_serializing_if = "Expect::is_default")]
        expect: Expect,
    },
    /// Zero negative iterates; `mu` and `alpha` give the step ceiling.
    Nonnegativity {
        mu: f64,
        alpha: f64,
        #[serde(default, skip_serializing_if = "Expect::is_default")]
        expect: Expect,
    },
}

impl CheckSpec {
    pub fn expect(&self) -> Expect {
        match self {
            CheckSpec::VIntegrability { expect, .. }
            | CheckSpec::ExponentialRate { expect, .. }
            | CheckSpec::TerminalRatio { expect, .. }
            | CheckSpec::AsStability { expect, .. }
            | CheckSpec::Divergence { expect, .. }
            | CheckSpec::Nonnegativity { expect, .. } => *expect,
        }
    }
}

fn three() -> f64 {
    3.0
}
fn burn_in() -> f64 {
    0.2
}
fn as_epsilon() -> f64 {
    1e-3
}
fn as_fraction() -> f64 {
    0.99
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceSpec {
    #[default]
    FineScheme,
    /// Closed-form solution; GBM only.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrongRateSpec {
    pub levels: Vec<f64>,
    pub h_ref: f64,
    #[serde(default)]
    pub reference: ReferenceSpec,
    pub slope_min: f64,
    pub slope_max: f64,
    #[serde(default)]
    pub sup_norm: bool,
    #[serde(default, skip_serializing_if = "Expect::is_default")]
    pub expect: Expect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSpec {
    /// Exponent in the Lipschitz certificate `μ|x−y|h^{−α}`.
    pub alpha: f64,
    pub mu: f64,
    /// `(X̄₀, Ȳ₀)`.
    pub x0: [f64; 2],
    #[serde(default)]
    pub sampling: SampleSpec,
    #[serde(default, skip_serializing_if = "Expect::is_default")]
    pub expect: Expect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
    #[serde(default)]
    pub strong_rate: Option<StrongRateSpec>,
    #[serde(default)]
    pub comparison: Option<ComparisonSpec>,
    /// Point cloud for sampled conditions.
    #[serde(default)]
    pub sampling: SampleSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Defaults to the command line `--out-dir`, then the working directory.
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default)]
    pub gnuplot: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Static checks that need no model evaluation.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return bad(format!(
                "name must be non-empty ASCII letters, digits, '-' or '_': {:?}",
                self.name
            ));
        }
        if self.scheme.h.is_empty() {
            return bad("scheme.h needs at least one step size".into());
        }
        for &h in &self.scheme.h {
            if !(h > 0.0 && h <= 1.0) {
                return bad(format!("h ∈ (0,1] violated: h = {h}"));
            }
        }
        if self.ensemble.n_paths == 0 {
            return bad("ensemble.n_paths ≥ 1 violated".into());
        }
        if let Some(s) = &self.analysis.strong_rate {
            if s.levels.len() < 4 {
                return bad("strong_rate.levels needs at least 4 step sizes".into());
            }
            if !(s.slope_min <= s.slope_max) {
                return bad("strong_rate.slope_min ≤ slope_max violated".into());
            }
        }
        for c in &self.analysis.checks {
            if let CheckSpec::AsStability {
                epsilon,
                min_fraction,
                ..
            } = c
            {
                if !(*epsilon > 0.0) || !(0.0..=1.0).contains(min_fraction) {
                    return bad("as-stability needs epsilon > 0 and min_fraction ∈ [0,1]".into());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
model = { kind = "cubic" }
[scheme]
kind = "projected"
h = [0.0625]
t_end = 1.0
projection = { r = 0.225 }
[ensemble]
n_paths = 10
seed = 1
x0 = [1.0]
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.lyapunov, LyapunovSpec::NormSquared);
        assert!(c.analysis.checks.is_empty());
        assert_eq!(c.ensemble.x0.point(), Some(&[1.0][..]));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let t = MINIMAL.replace("seed = 1", "seed = 1\nsede = 2");
        assert!(matches!(ExperimentConfig::from_toml(&t), Err(CliError::Config(_))));
        let t = MINIMAL.replace("{ kind = \"cubic\" }", "{ kind = \"cubic\", mu = 1 }");
        assert!(ExperimentConfig::from_toml(&t).is_err());
    }

    #[test]
    fn step_outside_unit_interval_is_named() {
        let t = MINIMAL.replace("[0.0625]", "[1.5]");
        match ExperimentConfig::from_toml(&t) {
            Err(CliError::Config(m)) => assert!(m.contains("h ∈ (0,1] violated"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn distribution_initial_state() {
        let t = MINIMAL.replace(
            "x0 = [1.0]",
            "x0 = { kind = \"uniform-ball\", center = [0.0], radius = 2.0 }",
        );
        let c = ExperimentConfig::from_toml(&t).unwrap();
        assert!(c.ensemble.x0.point().is_none());
    }
}
