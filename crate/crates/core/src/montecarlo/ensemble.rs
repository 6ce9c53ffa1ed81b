use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{norm, norm_sq};
use crate::montecarlo::rng::{fill_normals, RngSpec};
use crate::montecarlo::{CHUNK, DIVERGENCE_CAP};
use crate::schemes::Scheme;
use crate::sde::lyapunov::Lyapunov;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InitialState {
    Point { x: Vec<f64> },
    UniformBall { center: Vec<f64>, radius: f64 },
    Gaussian { mean: Vec<f64>, std: f64 },
}

impl InitialState {
    pub fn point(x: Vec<f64>) -> Self {
        InitialState::Point { x }
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialState::Point { x } => x.len(),
            InitialState::UniformBall { center, .. } => center.len(),
            InitialState::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            InitialState::Point { x } => x.clone(),
            InitialState::UniformBall { center, radius } => {
                let d = center.len();
                let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let n = norm(&dir);
                let u: f64 = rng.random();
                let rad = radius * u.powf(1.0 / d as f64);
                center
                    .iter()
                    .zip(&dir)
                    .map(|(c, v)| if n > 0.0 { c + v / n * rad } else { *c })
                    .collect()
            }
            InitialState::Gaussian { mean, std } => mean
                .iter()
                .map(|m| {
                    let z: f64 = rng.sample(StandardNormal);
                    m + std * z
                })
                .collect(),
        }
    }
}

/// Per-step scalar statistics accumulated over paths.
#[derive(Clone)]
pub enum Functional {
    MeanV(Arc<dyn Lyapunov>),
    SqNorm,
    Norm,
    Component(usize),
    /// Indicator of any negative coordinate.
    Negative,
}

impl fmt::Debug for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl Functional {
    pub fn name(&self) -> String {
        match self {
            Functional::MeanV(_) => "mean_v".into(),
            Functional::SqNorm => "mean_sq_norm".into(),
            Functional::Norm => "norm".into(),
            Functional::Component(i) => format!("x{i}"),
            Functional::Negative => "negative".into(),
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Functional::MeanV(v) => v.value(x),
            Functional::SqNorm => norm_sq(x),
            Functional::Norm => norm(x),
            Functional::Component(i) => x[*i],
            Functional::Negative => {
                if x.iter().any(|v| *v < 0.0) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub rng: RngSpec,
    pub x0: InitialState,
    pub functionals: Vec<Functional>,
    /// Number of leading paths whose full trajectories are kept.
    pub keep_paths: usize,
}

impl EnsembleConfig {
    pub fn new(n_paths: usize, seed: u64, x0: InitialState) -> Self {
        EnsembleConfig {
            n_paths,
            rng: RngSpec::new(seed),
            x0,
            functionals: Vec::new(),
            keep_paths: 0,
        }
    }

    pub fn with_functional(mut self, f: Functional) -> Self {
        self.functionals.push(f);
        self
    }

    pub fn keep(mut self, n: usize) -> Self {
        self.keep_paths = n;
        self
    }
}

/// Statistics of one functional at one grid time over the live paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepStats {
    pub n: u64,
    pub mean: f64,
    pub std_err: f64,
    pub max: f64,
    pub sum: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    n: u64,
    mean: f64,
    m2: f64,
    max: f64,
    sum: f64,
}

impl Acc {
    fn push(&mut self, v: f64) {
        if self.n == 0 {
            self.max = v;
        } else {
            self.max = self.max.max(v);
        }
        self.n += 1;
        let delta = v - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (v - self.mean);
        self.sum += v;
    }

    fn merge(&mut self, o: &Acc) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let delta = o.mean - self.mean;
        self.mean += delta * o.n as f64 / n as f64;
        self.m2 += o.m2 + delta * delta * (self.n as f64) * (o.n as f64) / n as f64;
        self.max = self.max.max(o.max);
        self.sum += o.sum;
        self.n = n;
    }

    fn stats(&self) -> StepStats {
        let se = if self.n > 1 {
            (self.m2 / (self.n as f64 - 1.0) / self.n as f64).sqrt()
        } else {
            0.0
        };
        StepStats {
            n: self.n,
            mean: if self.n > 0 { self.mean } else { f64::NAN },
            std_err: se,
            max: if self.n > 0 { self.max } else { f64::NAN },
            sum: self.sum,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FunctionalTrace {
    pub name: String,
    pub stats: Vec<StepStats>,
}

#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub n_paths: usize,
    pub times: Vec<f64>,
    pub traces: Vec<FunctionalTrace>,
    /// Final state of every path; for diverged paths the last state reached.
    pub terminal: Vec<Vec<f64>>,
    /// First step index at which each path diverged.
    pub diverged: Vec<Option<usize>>,
    /// Full trajectories of the first `keep_paths` paths.
    pub trajectories: Vec<Vec<Vec<f64>>>,
    /// Iterates with a negative coordinate over all live paths and steps.
    pub negative_steps: u64,
    /// First `(path, step)` with a negative coordinate.
    pub first_negative: Option<(usize, usize)>,
}

impl PathEnsemble {
    pub fn diverged_count(&self) -> usize {
        self.diverged.iter().filter(|d| d.is_some()).count()
    }

    pub fn divergence_fraction(&self) -> f64 {
        self.diverged_count() as f64 / self.n_paths.max(1) as f64
    }

    pub fn trace(&self, name: &str) -> Option<&FunctionalTrace> {
        self.traces.iter().find(|t| t.name == name)
    }
}

struct ChunkOut {
    accs: Vec<Vec<Acc>>,
    terminal: Vec<Vec<f64>>,
    diverged: Vec<Option<usize>>,
    trajectories: Vec<Vec<Vec<f64>>>,
    negative_steps: u64,
    first_negative: Option<(usize, usize)>,
}

fn is_diverged(x: &[f64], projected: bool) -> bool {
    x.iter().any(|v| !v.is_finite()) || (!projected && norm(x) > DIVERGENCE_CAP)
}

/// Iterates `scheme` over `cfg.n_paths` independent paths. Path `i` always
/// uses stream `i` of the master seed, and chunk results are merged in path
/// order, so the output does not depend on thread scheduling.
pub fn simulate_ensemble(scheme: &Scheme, cfg: &EnsembleConfig) -> PathEnsemble {
    let n_steps = scheme.n_steps();
    let h = scheme.h();
    let d = scheme.dim_state();
    let m = scheme.dim_noise();
    let projected = scheme.is_projected();
    let nf = cfg.functionals.len();
    let n_chunks = cfg.n_paths.div_ceil(CHUNK);

    let chunks: Vec<ChunkOut> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(cfg.n_paths);
            let mut out = ChunkOut {
                accs: vec![vec![Acc::default(); n_steps + 1]; nf],
                terminal: Vec::with_capacity(hi - lo),
                diverged: Vec::with_capacity(hi - lo),
                trajectories: Vec::new(),
                negative_steps: 0,
                first_negative: None,
            };
            let mut ws = scheme.workspace();
            let mut dw = vec![0.0; m];
            let mut next = vec![0.0; d];
            for path in lo..hi {
                let mut rng = cfg.rng.path_rng(path as u64);
                let x0 = cfg.x0.sample(&mut cfg.rng.init_rng(path as u64));
                let mut x = scheme.initial_state(&x0);
                let keep = path < cfg.keep_paths;
                let mut traj = if keep {
                    Vec::with_capacity(n_steps + 1)
                } else {
                    Vec::new()
                };
                let mut div = None;
                for k in 0..=n_steps {
                    if k > 0 {
                        fill_normals(&mut rng, h.sqrt(), &mut dw);
                        scheme.step((k - 1) as f64 * h, &x, &dw, &mut next, &mut ws);
                        std::mem::swap(&mut x, &mut next);
                    }
                    if keep {
                        traj.push(x.clone());
                    }
                    if is_diverged(&x, projected) {
                        div = Some(k);
                        break;
                    }
                    for (f, acc) in cfg.functionals.iter().zip(out.accs.iter_mut()) {
                        acc[k].push(f.eval(&x));
                    }
                    if x.iter().any(|v| *v < 0.0) {
                        out.negative_steps += 1;
                        if out.first_negative.is_none() {
                            out.first_negative = Some((path, k));
                        }
                    }
                }
                out.terminal.push(x.clone());
                out.diverged.push(div);
                if keep {
                    out.trajectories.push(traj);
                }
            }
            out
        })
        .collect();

    let mut accs = vec![vec![Acc::default(); n_steps + 1]; nf];
    let mut ens = PathEnsemble {
        n_paths: cfg.n_paths,
        times: (0..=n_steps).map(|k| k as f64 * h).collect(),
        traces: Vec::new(),
        terminal: Vec::with_capacity(cfg.n_paths),
        diverged: Vec::with_capacity(cfg.n_paths),
        trajectories: Vec::new(),
        negative_steps: 0,
        first_negative: None,
    };
    for ch in chunks {
        for (a, b) in accs.iter_mut().zip(&ch.accs) {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
        }
        ens.terminal.extend(ch.terminal);
        ens.diverged.extend(ch.diverged);
        ens.trajectories.extend(ch.trajectories);
        ens.negative_steps += ch.negative_steps;
        if ens.first_negative.is_none() {
            ens.first_negative = ch.first_negative;
        }
    }
    ens.traces = cfg
        .functionals
        .iter()
        .zip(accs)
        .map(|(f, a)| FunctionalTrace {
            name: f.name(),
            stats: a.iter().map(Acc::stats).collect(),
        })
        .collect();
    ens
}

#[derive(Debug, Clone)]
pub struct CoupledConfig {
    pub n_paths: usize,
    pub rng: RngSpec,
    pub x0_lower: Vec<f64>,
    pub x0_upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledReport {
    pub n_paths: usize,
    pub n_steps: usize,
    /// Steps where the lower path is strictly above the upper one.
    pub violation_count: u64,
    pub first_violation: Option<(usize, usize)>,
    /// Largest `X̄_k − Ȳ_k` seen; nonpositive when ordering held throughout.
    pub max_gap: f64,
    /// Negative iterates of either path.
    pub negative_steps: u64,
    /// Every lower iterate equal, bit for bit, to the upper one.
    pub identical: bool,
    pub diverged: usize,
}

/// Runs two one-dimensional schemes driven by the same increments and counts
/// ordering violations with zero tolerance.
pub fn simulate_coupled_pair(lower: &Scheme, upper: &Scheme, cfg: &CoupledConfig) -> CoupledReport {
    assert_eq!(lower.h(), upper.h(), "coupled schemes need one step size");
    assert_eq!(lower.n_steps(), upper.n_steps());
    let n_steps = lower.n_steps();
    let h = lower.h();
    let m = lower.dim_noise();
    let n_chunks = cfg.n_paths.div_ceil(CHUNK);

    let parts: Vec<CoupledReport> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(cfg.n_paths);
            let mut r = CoupledReport {
                n_paths: hi - lo,
                n_steps,
                violation_count: 0,
                first_violation: None,
                max_gap: f64::NEG_INFINITY,
                negative_steps: 0,
                identical: true,
                diverged: 0,
            };
            let mut wl = lower.workspace();
            let mut wu = upper.workspace();
            let mut dw = vec![0.0; m];
            let mut nx = vec![0.0; lower.dim_state()];
            let mut ny = vec![0.0; upper.dim_state()];
            for path in lo..hi {
                let mut rng = cfg.rng.path_rng(path as u64);
                let mut x = lower.initial_state(&cfg.x0_lower);
                let mut y = upper.initial_state(&cfg.x0_upper);
                for k in 0..=n_steps {
                    if k > 0 {
                        fill_normals(&mut rng, h.sqrt(), &mut dw);
                        let t = (k - 1) as f64 * h;
                        lower.step(t, &x, &dw, &mut nx, &mut wl);
                        upper.step(t, &y, &dw, &mut ny, &mut wu);
                        std::mem::swap(&mut x, &mut nx);
                        std::mem::swap(&mut y, &mut ny);
                    }
                    if is_diverged(&x, false) || is_diverged(&y, false) {
                        r.diverged += 1;
                        break;
                    }
                    let gap = x[0] - y[0];
                    r.max_gap = r.max_gap.max(gap);
                    if x[0] > y[0] {
                        r.violation_count += 1;
                        if r.first_violation.is_none() {
                            r.first_violation = Some((path, k));
                        }
                    }
                    if x[0].to_bits() != y[0].to_bits() {
                        r.identical = false;
                    }
                    r.negative_steps += (x[0] < 0.0) as u64 + (y[0] < 0.0) as u64;
                }
            }
            r
        })
        .collect();

    let mut total = CoupledReport {
        n_paths: cfg.n_paths,
        n_steps,
        violation_count: 0,
        first_violation: None,
        max_gap: f64::NEG_INFINITY,
        negative_steps: 0,
        identical: true,
        diverged: 0,
    };
    for p in parts {
        total.violation_count += p.violation_count;
        if total.first_violation.is_none() {
            total.first_violation = p.first_violation;
        }
        total.max_gap = total.max_gap.max(p.max_gap);
        total.negative_steps += p.negative_steps;
        total.identical &= p.identical;
        total.diverged += p.diverged;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::{SchemeConfig, SchemeKind};
    use crate::sde::builtin::{Gbm, Zero};

    #[test]
    fn welford_merge_matches_direct() {
        let vals: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin() * 5.0 + 3.0).collect();
        let mut whole = Acc::default();
        vals.iter().for_each(|v| whole.push(*v));
        let mut a = Acc::default();
        let mut b = Acc::default();
        vals[..77].iter().for_each(|v| a.push(*v));
        vals[77..].iter().for_each(|v| b.push(*v));
        a.merge(&b);
        let (s1, s2) = (whole.stats(), a.stats());
        assert!((s1.mean - s2.mean).abs() < 1e-12);
        assert!((s1.std_err - s2.std_err).abs() < 1e-12);
        assert_eq!(s1.max, s2.max);
    }

    #[test]
    fn zero_model_is_constant() {
        let s = Scheme::new(
            Arc::new(Zero { d: 2, m: 2 }),
            SchemeConfig::new(SchemeKind::Standard, 0.1, 1.0),
        )
        .unwrap();
        let cfg = EnsembleConfig::new(10, 1, InitialState::point(vec![1.0, -2.0])).keep(10);
        let e = simulate_ensemble(&s, &cfg);
        assert_eq!(e.trajectories.len(), 10);
        for tr in &e.trajectories {
            assert_eq!(tr.len(), 11);
            assert!(tr.iter().all(|x| x == &vec![1.0, -2.0]));
        }
    }

    #[test]
    fn coupled_identical_drifts_are_bitwise_equal() {
        let mk = || {
            Scheme::new(
                Arc::new(Gbm::new(0.1, 0.3)),
                SchemeConfig::new(SchemeKind::TruncatedNoise, 1.0 / 64.0, 1.0),
            )
            .unwrap()
        };
        let r = simulate_coupled_pair(
            &mk(),
            &mk(),
            &CoupledConfig {
                n_paths: 100,
                rng: RngSpec::new(3),
                x0_lower: vec![1.0],
                x0_upper: vec![1.0],
            },
        );
        assert!(r.identical);
        assert_eq!(r.violation_count, 0);
        assert_eq!(r.max_gap, 0.0);
    }
}
