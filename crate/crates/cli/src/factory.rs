//! Turns configuration values into models, Lyapunov functions and schemes.

use std::sync::Arc;

use tamed_euler::linalg::norm;
use tamed_euler::schemes::{Scheme, SchemeConfig, Taming};
use tamed_euler::sde::builtin::{Cubic, Gbm, Lorenz, VanDerPol, Zero};
use tamed_euler::sde::lyapunov::{Lyapunov, NormPower, WeightedPoly};
use tamed_euler::sde::model::SdeModel;
use tamed_euler::taming::{build_balanced_taming, build_stability_taming};

use crate::config::{ExperimentConfig, LyapunovSpec, ModelSpec, TamingSpec};
use crate::CliError;

pub fn model(spec: &ModelSpec) -> Result<Arc<dyn SdeModel>, CliError> {
    Ok(match spec {
        ModelSpec::Zero { d, m } => Arc::new(Zero { d: *d, m: *m }),
        ModelSpec::Cubic {} => Arc::new(Cubic),
        ModelSpec::Lorenz { .. } => Arc::new(Lorenz::new(spec.lorenz_params().unwrap())?),
        ModelSpec::Vdp { .. } => Arc::new(VanDerPol::new(spec.vdp_params().unwrap())?),
        ModelSpec::Gbm { mu, sigma } => Arc::new(Gbm::new(*mu, *sigma)),
        ModelSpec::LinearPair { .. } => {
            return Err(CliError::Config(
                "model linear-pair runs only through `compare`".into(),
            ))
        }
    })
}

pub fn lyapunov(spec: &LyapunovSpec, d: usize) -> Result<Arc<dyn Lyapunov>, CliError> {
    Ok(match spec {
        LyapunovSpec::NormSquared => Arc::new(NormPower::new(2.0, 2.0 * (d as f64).sqrt())),
        LyapunovSpec::NormPower { p, c } => {
            if !(*p >= 2.0) {
                return Err(CliError::Config(format!("norm-power needs p ≥ 2, got {p}")));
            }
            Arc::new(NormPower::new(*p, *c))
        }
        LyapunovSpec::Vdp => {
            if d != 2 {
                return Err(CliError::Config("the vdp Lyapunov function needs d = 2".into()));
            }
            Arc::new(WeightedPoly::vdp())
        }
    })
}

pub fn taming(
    spec: &TamingSpec,
    model: &dyn SdeModel,
    lyap: &Arc<dyn Lyapunov>,
) -> Result<Taming, CliError> {
    Ok(match *spec {
        TamingSpec::SinglePower { coeff, power, alpha } => {
            Taming::single_power(move |x: &[f64]| coeff * norm(x).powf(power), alpha)
        }
        TamingSpec::Balanced { mu, beta2 } => {
            build_balanced_taming(lyap.clone(), &model.growth(), mu, beta2)?
        }
        TamingSpec::Stability {
            kappa1,
            kappa2,
            gamma,
            c,
        } => {
            let v = lyap.clone();
            build_stability_taming(move |x: &[f64]| v.value(x), kappa1, kappa2, gamma, c)
        }
    })
}

/// Everything an experiment needs, built once per configuration.
pub struct Built {
    pub model: Arc<dyn SdeModel>,
    pub lyap: Arc<dyn Lyapunov>,
    pub taming: Option<Taming>,
}

impl Built {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let model = model(&cfg.model)?;
        let lyap = lyapunov(&cfg.lyapunov, model.dim_state())?;
        let taming = match &cfg.scheme.taming {
            Some(t) => Some(taming(t, model.as_ref(), &lyap)?),
            None => None,
        };
        if let Some(x) = cfg.ensemble.x0.point() {
            if x.len() != model.dim_state() {
                return Err(CliError::Config(format!(
                    "x0 has {} components, model {} has d = {}",
                    x.len(),
                    model.name(),
                    model.dim_state()
                )));
            }
        }
        Ok(Built {
            model,
            lyap,
            taming,
        })
    }

    pub fn scheme_config(&self, cfg: &ExperimentConfig, h: f64) -> SchemeConfig {
        SchemeConfig {
            kind: cfg.scheme.kind,
            taming: self.taming.clone(),
            projection: cfg.scheme.projection,
            h,
            t_end: cfg.scheme.t_end,
        }
    }

    pub fn scheme(&self, cfg: &ExperimentConfig, h: f64) -> Result<Scheme, CliError> {
        Ok(Scheme::new(self.model.clone(), self.scheme_config(cfg, h))?)
    }
}
