//! Acceptance run: one PASS/FAIL line per criterion. Seeds, path counts and
//! tolerances are pinned here or in the packaged configurations.

use std::sync::Arc;
use std::time::Instant;

use tamed_euler::analysis::{fit_exponential_rate, CheckOutcome, Window};
use tamed_euler::linalg::norm;
use tamed_euler::montecarlo::{simulate_ensemble, EnsembleConfig, Functional, InitialState};
use tamed_euler::sampling::SampleSpec;
use tamed_euler::schemes::{
    project_in_place, truncate_noise, truncation_level, ProjectionConfig, ProjectionVariant,
    Scheme, SchemeConfig, SchemeKind, Taming,
};
use tamed_euler::sde::builtin::{Cubic, Gbm, Lorenz, LorenzParams, VanDerPol, VanDerPolParams};
use tamed_euler::sde::lyapunov::{finite_difference_check, NormPower, WeightedPoly};
use tamed_euler::sde::operator::diffusion_operator;
use tamed_euler_cli::{execute, load_config, output, Command, Options, RunReport};

struct Line {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
    budget: f64,
}

fn run(name: &str) -> RunReport {
    let cfg = load_config(name).unwrap_or_else(|e| panic!("{name}: {e}"));
    execute(cfg, Command::Run, &Options::default()).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn checks<'a>(r: &'a RunReport, name: &str) -> Vec<&'a CheckOutcome> {
    r.experiments
        .iter()
        .flat_map(|e| &e.checks)
        .filter(|c| c.name == name)
        .collect()
}

fn one<'a>(r: &'a RunReport, name: &str) -> &'a CheckOutcome {
    let v = checks(r, name);
    assert_eq!(v.len(), 1, "{} has {} {name} checks", r.name, v.len());
    v[0]
}

fn timed(
    id: &'static str,
    title: &'static str,
    budget: f64,
    f: impl FnOnce() -> (bool, String),
) -> Line {
    let t = Instant::now();
    let (pass, detail) = f();
    Line {
        id,
        title,
        pass,
        detail,
        seconds: t.elapsed().as_secs_f64(),
        budget,
    }
}

fn c1() -> (bool, String) {
    let r = run("cubic-integrability");
    let cs = checks(&r, "v-integrability");
    let worst = cs
        .iter()
        .map(|c| c.observed / c.bound)
        .fold(0.0f64, f64::max);
    (
        cs.len() == 5 && cs.iter().all(|c| c.pass),
        format!(
            "{}/5 step sizes within e^(rho~ T)(1 + EV0) + 3 SE; worst max E V / bound = {worst:.4}",
            cs.iter().filter(|c| c.pass).count()
        ),
    )
}

fn c2() -> (bool, String) {
    let r = run("cubic-euler-divergence");
    let d = one(&r, "divergence");
    let v = one(&r, "v-integrability");
    (
        d.observed > 0.5 && !v.pass,
        format!(
            "divergence fraction {} (> 0.5), v-integrability {}",
            d.observed,
            if v.pass { "passes" } else { "fails" }
        ),
    )
}

fn c3() -> (bool, String) {
    let cubic = run("cubic-strong-rate");
    let gbm = run("gbm-strong-rate");
    let a = one(&cubic, "strong-rate");
    let b = one(&gbm, "strong-rate");
    let ok_a = (0.35..=0.65).contains(&a.observed);
    let ok_b = (0.4..=0.6).contains(&b.observed);
    (
        ok_a && ok_b,
        format!(
            "cubic slope {:.4} in [0.35, 0.65]: {ok_a}; gbm oracle slope {:.4} in [0.4, 0.6]: {ok_b}",
            a.observed, b.observed
        ),
    )
}

fn c4() -> (bool, String) {
    let r = run("lorenz-msq-stability");
    let c = one(&r, "exponential-rate");
    (c.pass && c.observed <= -0.8, c.detail.clone())
}

fn c5() -> (bool, String) {
    let r = run("vdp-exp-stability");
    let rate = one(&r, "exponential-rate");
    let term = one(&r, "terminal-ratio");
    let vdp = VanDerPol::new(VanDerPolParams::default()).unwrap();
    let rho = vdp.exponential_rate();
    let r_ok = r.config.scheme.projection.map(|p| p.r < 0.25).unwrap_or(false);
    (
        rate.pass && rate.observed <= -0.4 * 2.0 && term.pass && r_ok,
        format!(
            "slope {:.4} (need <= -0.8), final/initial mean V {:.3e} (need < 1e-2), r < 1/4: {r_ok}; drift check rate for these parameters is {rho}",
            rate.observed, term.observed
        ),
    )
}

fn c6() -> (bool, String) {
    let r = run("cubic-as-stability");
    let c = one(&r, "as-stability");
    (c.pass, c.detail.clone())
}

/// Standard Euler on GBM(0.1, σ) at h = 0.5 with 1000 paths of 100 steps.
fn euler_negatives(sigma: f64) -> u64 {
    let scheme = Scheme::new(
        Arc::new(Gbm::new(0.1, sigma)),
        SchemeConfig::new(SchemeKind::Standard, 0.5, 50.0),
    )
    .unwrap();
    let cfg = EnsembleConfig::new(1000, 17, InitialState::point(vec![1.0]))
        .with_functional(Functional::Negative);
    simulate_ensemble(&scheme, &cfg).negative_steps
}

fn c7() -> (bool, String) {
    let r = run("gbm-positivity");
    let c = one(&r, "nonnegativity");
    let steps = r.config.scheme.t_end / r.config.scheme.h[0];
    let th = r
        .derived
        .iter()
        .find(|d| d.name.starts_with("h_threshold.positivity"))
        .map(|d| d.value)
        .unwrap();
    let h_ok = r.config.scheme.h[0] <= th;
    let stated = euler_negatives(0.3);
    let pass = c.pass && c.observed == 0.0 && h_ok && steps >= 1000.0 && stated >= 1;
    (
        pass,
        format!(
            "truncated noise: {} negatives over 100 x {steps} steps at h = {} <= {th}; contrast sigma = 0.3: {stated} negatives in 1e5 path-steps (need >= 1)",
            c.observed, r.config.scheme.h[0]
        ),
    )
}

fn c7_info() -> (bool, String) {
    let n = euler_negatives(0.5);
    (
        n >= 1,
        format!("contrast at sigma = 0.5, where Phi(-2.97) applies: {n} negatives in 1e5 path-steps"),
    )
}

fn c8() -> (bool, String) {
    let r = run("linear-comparison");
    let c = one(&r, "comparison");
    let hyp = r
        .experiments
        .iter()
        .flat_map(|e| &e.checks)
        .filter(|c| c.name.starts_with("hypothesis:"))
        .all(|c| c.pass);
    (c.pass && c.observed == 0.0 && hyp, c.detail.clone())
}

fn c9() -> (bool, String) {
    let mut fails: Vec<String> = Vec::new();
    let pts3 = SampleSpec::default().with_counts(10_000, 0).points(3);

    let t = Taming::case_i(|x: &[f64], h| 3.0 * norm(x) * h.sqrt());
    let mut worst = 0.0f64;
    for (k, x) in pts3.iter().enumerate() {
        let h = 2f64.powi(-((k % 12) as i32));
        let lhs = 1.0 + t.g_b(x, h);
        let rhs = (1.0 + t.g_sigma(x, h)).powi(2);
        worst = worst.max((lhs - rhs).abs() / rhs);
    }
    if worst > 1e-12 {
        fails.push(format!("case-(i) identity off by {worst:e}"));
    }

    for (k, x) in pts3.iter().take(2000).enumerate() {
        let x: Vec<f64> = x.iter().map(|v| v * 1e3).collect();
        let h = 2f64.powi(-((k % 10) as i32 + 1));
        let p = ProjectionConfig::radial(0.45);
        let y = p.project(&x, h);
        if norm(&y) > p.radius(h) || p.project(&y, h) != y {
            fails.push(format!("radial projection at {x:?}"));
            break;
        }
        let mut c1 = x.clone();
        project_in_place(&mut c1, 5.0, ProjectionVariant::Componentwise);
        let mut c2 = c1.clone();
        project_in_place(&mut c2, 5.0, ProjectionVariant::Componentwise);
        if c1 != c2 || norm(&c1) > 5.0 * (1.0 + 1e-12) {
            fails.push(format!("componentwise projection at {x:?}"));
            break;
        }
        let a = truncation_level(h).unwrap();
        let z = truncate_noise(&x, h).unwrap();
        let clamp_ok = x.iter().zip(&z).all(|(u, v)| {
            v.abs() <= a && (u.abs() > a || u == v) && (u.abs() <= a || v.abs() == a)
        });
        if !clamp_ok || truncate_noise(&z, h).unwrap() != z {
            fails.push(format!("noise clamp at {x:?}"));
            break;
        }
    }

    let fd1: Vec<Vec<f64>> = SampleSpec::default().with_counts(200, 0).points(1);
    let fd2: Vec<Vec<f64>> = SampleSpec::default().with_counts(200, 0).points(2);
    for (name, r) in [
        ("|x|^2", finite_difference_check(&NormPower::squared(), &pts3[..200])),
        ("|x|^4", finite_difference_check(&NormPower::new(4.0, 10.0), &fd1)),
        ("x1^4 + 2x2^2", finite_difference_check(&WeightedPoly::vdp(), &fd2)),
    ] {
        if !r.pass {
            fails.push(format!(
                "{name}: FD deviation {:e}/{:e}",
                r.max_gradient_deviation, r.max_hessian_deviation
            ));
        }
    }

    let lorenz = Lorenz::new(LorenzParams::default()).unwrap();
    let vdp = VanDerPol::new(VanDerPolParams::default()).unwrap();
    let sq = NormPower::squared();
    let mut lv_worst = 0.0f64;
    let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + b.abs());
    for x in &fd1 {
        let want = -x[0].powi(4);
        lv_worst = lv_worst.max(rel(diffusion_operator(&Cubic, &sq, 0.0, x).unwrap(), want));
    }
    for x in &pts3[..1000] {
        let got = diffusion_operator(&lorenz, &sq, 0.0, x).unwrap();
        lv_worst = lv_worst.max(rel(got, lorenz.generator_sq_norm(x)));
    }
    for x in &fd2 {
        let got = diffusion_operator(&vdp, &WeightedPoly::vdp(), 0.0, x).unwrap();
        lv_worst = lv_worst.max(rel(got, vdp.generator_vdp_v(x)));
    }
    if lv_worst > 1e-10 {
        fails.push(format!("closed-form LV off by {lv_worst:e}"));
    }

    let times: Vec<f64> = (0..=400).map(|k| k as f64 / 40.0).collect();
    for rate in [-3.0, -0.8, 0.0, 1.5] {
        let means: Vec<f64> = times.iter().map(|t| 2.5 * (rate * t).exp()).collect();
        let f = fit_exponential_rate(&times, &means, Window::burn_in(10.0)).unwrap();
        if (f.slope - rate).abs() > 1e-12 * (1.0 + rate.abs()) {
            fails.push(format!("synthetic rate {rate} fitted as {}", f.slope));
        }
    }

    let mut cfg = load_config("lorenz-msq-stability").unwrap();
    cfg.ensemble.n_paths = 500;
    let a = execute(cfg.clone(), Command::Run, &Options::default()).unwrap();
    let b = execute(cfg, Command::Run, &Options::default()).unwrap();
    if output::trace_csv(&a) != output::trace_csv(&b)
        || output::report_json(&a).unwrap() != output::report_json(&b).unwrap()
    {
        fails.push("equal seeds gave different CSV/JSON".into());
    }

    (
        fails.is_empty(),
        if fails.is_empty() {
            format!("case-(i) {worst:.1e}, LV {lv_worst:.1e}, projections/clamp exact, fits exact, outputs byte-identical")
        } else {
            fails.join("; ")
        },
    )
}

fn main() {
    // Progress chatter from the runner goes to stderr; keep stdout for the verdicts.
    let lines = [
        timed("1", "V-integrability of projected Euler (cubic)", 30.0, c1),
        timed("2", "explicit Euler diverges (cubic, X0 = 10)", 10.0, c2),
        timed("3", "strong rate 1/2 (cubic, GBM oracle)", 120.0, c3),
        timed("4", "mean-square exponential stability (Lorenz)", 60.0, c4),
        timed("5", "V-exponential stability (van der Pol)", 60.0, c5),
        timed("6", "almost-sure stability (cubic, G = 2|x|^2)", 30.0, c6),
        timed("7", "nonnegativity (GBM) with Euler contrast", 20.0, c7),
        timed("7b", "[info] Euler contrast at sigma = 0.5", 20.0, c7_info),
        timed("8", "comparison of coupled schemes", 20.0, c8),
        timed("9", "algebraic and oracle properties", 10.0, c9),
    ];
    println!();
    println!("acceptance summary");
    let mut failed = 0;
    for l in &lines {
        let in_time = l.seconds <= l.budget;
        let pass = l.pass && in_time;
        let informational = l.title.starts_with("[info]");
        if !pass && !informational {
            failed += 1;
        }
        println!(
            "{} criterion {:<3} {} ({:.1} s of {:.0} s): {}",
            if pass { "PASS" } else { "FAIL" },
            l.id,
            l.title,
            l.seconds,
            l.budget,
            if in_time {
                l.detail.clone()
            } else {
                format!("over time budget; {}", l.detail)
            }
        );
    }
    println!("{failed} criteria failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
