use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::norm_sq;
use crate::montecarlo::lattice::BrownianLattice;
use crate::montecarlo::rng::RngSpec;
use crate::schemes::Scheme;

pub type ExactFn = Arc<dyn Fn(&[f64], f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// What the coarse levels are compared against.
#[derive(Clone, Default)]
pub enum Reference {
    /// The same scheme family at `h_ref`.
    #[default]
    FineScheme,
    /// A closed-form solution `X_T = f(X₀, T, W_T)`.
    Exact(ExactFn),
}

impl fmt::Debug for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::FineScheme => f.write_str("FineScheme"),
            Reference::Exact(_) => f.write_str("Exact"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StrongErrorConfig {
    pub levels: Vec<f64>,
    pub h_ref: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub rng: RngSpec,
    pub x0: Vec<f64>,
    pub reference: Reference,
    /// Maximum over the coarse grid instead of the terminal time.
    pub sup_norm: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelError {
    pub h: f64,
    /// `(E|X̄^h_T − X^ref_T|²)^{1/2}`.
    pub rms: f64,
    /// Standard error of `rms` by the delta method.
    pub std_err: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongErrorResult {
    pub h_ref: f64,
    pub levels: Vec<LevelError>,
    /// Paths dropped because a level or the reference diverged.
    pub diverged: usize,
}

/// Per-path squared errors for every level, with all levels driven by the
/// same fine Brownian lattice. `factory(h)` builds the scheme at step `h`.
pub fn couple_strong_error(
    factory: &(dyn Fn(f64) -> Result<Scheme> + Sync),
    cfg: &StrongErrorConfig,
) -> Result<StrongErrorResult> {
    if cfg.levels.iter().any(|h| *h < cfg.h_ref) {
        return Err(Error::config("every level must be at least as coarse as h_ref"));
    }
    let reference = factory(cfg.h_ref)?;
    let lattice = BrownianLattice::new(cfg.t_end, cfg.h_ref, reference.dim_noise())?;
    let mut schemes = Vec::with_capacity(cfg.levels.len());
    for &h in &cfg.levels {
        let factor = lattice.factor(h)?;
        schemes.push((factory(h)?, factor));
    }

    let per_path: Vec<Option<Vec<f64>>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let fine = lattice.draw(&mut cfg.rng.path_rng(p as u64));
            let ref_path = match &cfg.reference {
                Reference::FineScheme => run(&reference, &cfg.x0, &fine, cfg.sup_norm)?,
                Reference::Exact(f) => exact_path(f.as_ref(), &lattice, &cfg.x0, &fine),
            };
            let mut errs = Vec::with_capacity(schemes.len());
            for (s, factor) in &schemes {
                let coarse = lattice.coarsen(&fine, *factor);
                let path = run(s, &cfg.x0, &coarse, cfg.sup_norm)?;
                let e = if cfg.sup_norm {
                    path.iter()
                        .enumerate()
                        .map(|(k, x)| sq_dist(x, &ref_path[k * factor]))
                        .fold(0.0, f64::max)
                } else {
                    sq_dist(path.last().unwrap(), ref_path.last().unwrap())
                };
                errs.push(e);
            }
            Some(errs)
        })
        .collect();

    let diverged = per_path.iter().filter(|p| p.is_none()).count();
    let ok: Vec<&Vec<f64>> = per_path.iter().flatten().collect();
    let n = ok.len();
    let levels = cfg
        .levels
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for e in &ok {
                sum += e[i];
                sumsq += e[i] * e[i];
            }
            let mean = sum / n.max(1) as f64;
            let var = if n > 1 {
                ((sumsq - n as f64 * mean * mean) / (n as f64 - 1.0)).max(0.0)
            } else {
                0.0
            };
            let se_mean = (var / n.max(1) as f64).sqrt();
            let rms = mean.sqrt();
            LevelError {
                h,
                rms,
                std_err: if rms > 0.0 { se_mean / (2.0 * rms) } else { 0.0 },
                n,
            }
        })
        .collect();
    Ok(StrongErrorResult {
        h_ref: cfg.h_ref,
        levels,
        diverged,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Grid states when `keep_all`, else just the initial and terminal state.
fn run(s: &Scheme, x0: &[f64], incs: &[f64], keep_all: bool) -> Option<Vec<Vec<f64>>> {
    let m = s.dim_noise();
    let h = s.h();
    let n = incs.len() / m;
    let mut ws = s.workspace();
    let mut x = s.initial_state(x0);
    let mut next = vec![0.0; x.len()];
    let mut out = vec![x.clone()];
    for k in 0..n {
        s.step(k as f64 * h, &x, &incs[k * m..(k + 1) * m], &mut next, &mut ws);
        std::mem::swap(&mut x, &mut next);
        if x.iter().any(|v| !v.is_finite()) || norm_sq(&x) > 1e24 {
            return None;
        }
        if keep_all {
            out.push(x.clone());
        }
    }
    if !keep_all {
        out.push(x);
    }
    Some(out)
}

fn exact_path(
    f: &(dyn Fn(&[f64], f64, &[f64]) -> Vec<f64> + Send + Sync),
    lat: &BrownianLattice,
    x0: &[f64],
    fine: &[f64],
) -> Vec<Vec<f64>> {
    let m = lat.m;
    let mut w = vec![0.0; m];
    let mut out = vec![x0.to_vec()];
    for k in 0..lat.n_fine {
        for j in 0..m {
            w[j] += fine[k * m + j];
        }
        out.push(f(x0, (k + 1) as f64 * lat.h_fine, &w));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::{SchemeConfig, SchemeKind};
    use crate::sde::builtin::Zero;

    #[test]
    fn zero_model_has_zero_error_and_reference_level_is_exact() {
        let factory = |h: f64| {
            Scheme::new(
                Arc::new(Zero { d: 1, m: 1 }),
                SchemeConfig::new(SchemeKind::Standard, h, 1.0),
            )
        };
        let cfg = StrongErrorConfig {
            levels: vec![1.0 / 64.0, 1.0 / 16.0],
            h_ref: 1.0 / 64.0,
            t_end: 1.0,
            n_paths: 50,
            rng: RngSpec::new(9),
            x0: vec![1.0],
            reference: Reference::FineScheme,
            sup_norm: false,
        };
        let r = couple_strong_error(&factory, &cfg).unwrap();
        assert!(r.levels.iter().all(|l| l.rms == 0.0));
    }

    #[test]
    fn non_dyadic_level_is_a_config_error() {
        let factory = |h: f64| {
            Scheme::new(
                Arc::new(Zero { d: 1, m: 1 }),
                SchemeConfig::new(SchemeKind::Standard, h, 1.0),
            )
        };
        let cfg = StrongErrorConfig {
            levels: vec![3.0 / 64.0],
            h_ref: 1.0 / 64.0,
            t_end: 1.0,
            n_paths: 5,
            rng: RngSpec::new(9),
            x0: vec![1.0],
            reference: Reference::FineScheme,
            sup_norm: false,
        };
        assert!(matches!(
            couple_strong_error(&factory, &cfg),
            Err(Error::Config(_))
        ));
    }
}
