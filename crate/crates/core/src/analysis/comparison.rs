use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::montecarlo::{simulate_coupled_pair, CoupledConfig, CoupledReport, RngSpec};
use crate::sampling::SampleSpec;
use crate::schemes::{Scheme, SchemeConfig, SchemeKind, TamedCoefficients, Taming};
use crate::sde::model::SdeModel;
use crate::taming::{derive_h_threshold, HThresholdRule};

/// Two scalar equations with a shared diffusion, tamed alike and run on
/// shared truncated noise.
#[derive(Clone)]
pub struct ComparisonSetup {
    pub lower: Arc<dyn SdeModel>,
    pub upper: Arc<dyn SdeModel>,
    pub taming: Taming,
    pub alpha: f64,
    /// Lipschitz constant `μ` of the tamed upper drift in units of `h^{−α}`.
    pub mu: f64,
    pub h: f64,
    pub t_end: f64,
    pub x0_lower: f64,
    pub x0_upper: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub spec: SampleSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub hypotheses: Vec<HypothesisCheck>,
    pub h_threshold: f64,
    /// Absent when a hypothesis failed and nothing was simulated.
    pub coupled: Option<CoupledReport>,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn failed_hypotheses(&self) -> Vec<&str> {
        self.hypotheses
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect()
    }
}

fn scalar(f: impl Fn(&mut [f64])) -> f64 {
    let mut o = [0.0];
    f(&mut o);
    o[0]
}

/// Verifies the comparison hypotheses by sampling the half line, then runs
/// the coupled pair and counts strict ordering violations.
pub fn run_comparison(s: &ComparisonSetup) -> Result<ComparisonReport> {
    for m in [&s.lower, &s.upper] {
        if m.dim_state() != 1 || m.dim_noise() != 1 {
            return Err(Error::config("comparison needs scalar equations with scalar noise"));
        }
    }
    let lo = TamedCoefficients::new(s.lower.clone(), s.taming.clone());
    let up = TamedCoefficients::new(s.upper.clone(), s.taming.clone());
    let h = s.h;
    let points = s.spec.nonnegative().points(1);
    let mut hyps = Vec::new();

    let mut worst = f64::NEG_INFINITY;
    let mut at = 0.0;
    for p in &points {
        let gap = scalar(|o| lo.tamed_drift(0.0, p, h, o)) - scalar(|o| up.tamed_drift(0.0, p, h, o));
        if gap > worst {
            worst = gap;
            at = p[0];
        }
    }
    hyps.push(HypothesisCheck {
        name: "drift-order".into(),
        pass: worst <= 0.0,
        detail: format!("max (nu^h - lambda^h) = {worst} at x = {at}"),
    });

    let mut worst = 0.0f64;
    for p in &points {
        let sl = scalar(|o| s.lower.diffusion(0.0, p, o));
        let su = scalar(|o| s.upper.diffusion(0.0, p, o));
        worst = worst.max((sl - su).abs());
    }
    hyps.push(HypothesisCheck {
        name: "shared-diffusion".into(),
        pass: worst == 0.0,
        detail: format!("max |sigma_lower - sigma_upper| = {worst}"),
    });

    let cap = s.mu * h.powf(-s.alpha);
    let mut worst = 0.0f64;
    for w in points.windows(2) {
        let (x, y) = (&w[0], &w[1]);
        let dx = (x[0] - y[0]).abs();
        if dx == 0.0 {
            continue;
        }
        let dl = (scalar(|o| up.tamed_drift(0.0, x, h, o)) - scalar(|o| up.tamed_drift(0.0, y, h, o))).abs();
        worst = worst.max(dl / dx);
    }
    hyps.push(HypothesisCheck {
        name: "lipschitz-taming".into(),
        pass: worst <= cap * (1.0 + 1e-12),
        detail: format!("max |lambda^h(x) - lambda^h(y)|/|x - y| = {worst}, mu h^-alpha = {cap}"),
    });

    let h_threshold = derive_h_threshold(HThresholdRule::NoiseTruncation {
        mu: s.mu,
        alpha: s.alpha,
    });
    hyps.push(HypothesisCheck {
        name: "step-size".into(),
        pass: h <= h_threshold && h < 1.0,
        detail: format!("h = {h}, threshold {h_threshold}"),
    });

    hyps.push(HypothesisCheck {
        name: "initial-order".into(),
        pass: s.x0_lower <= s.x0_upper,
        detail: format!("x0 = ({}, {})", s.x0_lower, s.x0_upper),
    });

    if hyps.iter().any(|c| !c.pass) {
        return Ok(ComparisonReport {
            hypotheses: hyps,
            h_threshold,
            coupled: None,
            pass: false,
        });
    }

    let cfg = |m: &Arc<dyn SdeModel>| {
        Scheme::new(
            m.clone(),
            SchemeConfig::new(SchemeKind::TruncatedNoiseBalanced, h, s.t_end)
                .with_taming(s.taming.clone()),
        )
    };
    let coupled = simulate_coupled_pair(
        &cfg(&s.lower)?,
        &cfg(&s.upper)?,
        &CoupledConfig {
            n_paths: s.n_paths,
            rng: RngSpec::new(s.seed),
            x0_lower: vec![s.x0_lower],
            x0_upper: vec![s.x0_upper],
        },
    );
    let pass = coupled.violation_count == 0 && coupled.diverged == 0;
    Ok(ComparisonReport {
        hypotheses: hyps,
        h_threshold,
        coupled: Some(coupled),
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::builtin::{Gbm, LinearPair};

    fn setup(pair: LinearPair) -> ComparisonSetup {
        let alpha = 0.5;
        ComparisonSetup {
            lower: Arc::new(pair.lower()),
            upper: Arc::new(pair.upper()),
            taming: Taming::single(move |_, h| h.powf(alpha)),
            alpha,
            mu: 0.3,
            h: 1.0 / 64.0,
            t_end: 2.0,
            x0_lower: 1.0,
            x0_upper: 1.0,
            n_paths: 50,
            seed: 11,
            spec: SampleSpec::default().with_counts(500, 20),
        }
    }

    #[test]
    fn reversed_drifts_fail_drift_order() {
        let r = run_comparison(&setup(LinearPair {
            nu: 0.2,
            lambda: 0.1,
            sigma: 0.3,
        }))
        .unwrap();
        assert_eq!(r.failed_hypotheses(), vec!["drift-order"]);
        assert!(r.coupled.is_none());
        assert!(!r.pass);
    }

    #[test]
    fn equal_drifts_are_bitwise_equal() {
        let r = run_comparison(&setup(LinearPair {
            nu: 0.1,
            lambda: 0.1,
            sigma: 0.3,
        }))
        .unwrap();
        let c = r.coupled.unwrap();
        assert!(c.identical);
        assert_eq!(c.violation_count, 0);
    }

    #[test]
    fn different_diffusions_are_rejected() {
        let mut s = setup(LinearPair {
            nu: 0.1,
            lambda: 0.2,
            sigma: 0.3,
        });
        s.upper = Arc::new(Gbm::new(0.2, 0.4));
        let r = run_comparison(&s).unwrap();
        assert_eq!(r.failed_hypotheses(), vec!["shared-diffusion"]);
    }
}
