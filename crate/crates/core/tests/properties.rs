use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use tamed_euler::analysis::{estimate_v_integrability, fit_exponential_rate, VBoundParams, Window};
use tamed_euler::linalg::norm;
use tamed_euler::montecarlo::{
    simulate_ensemble, BrownianLattice, EnsembleConfig, Functional, FunctionalTrace,
    InitialState, RngSpec, StepStats,
};
use tamed_euler::schemes::{
    project_in_place, truncate_noise, truncation_level, ProjectionConfig, ProjectionVariant,
    Scheme, SchemeConfig, SchemeKind, Taming,
};
use tamed_euler::sde::builtin::{Cubic, Lorenz, LorenzParams};
use tamed_euler::sde::lyapunov::{finite_difference_check, NormPower, WeightedPoly};

fn vec_in(d: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, d)
}

proptest! {
    #[test]
    fn radial_projection_lands_in_ball_and_is_idempotent(
        x in vec_in(3, 1e6),
        r in 0.05f64..0.5,
        k in 1u32..12,
    ) {
        let h = 2f64.powi(-(k as i32));
        let p = ProjectionConfig::radial(r);
        let y = p.project(&x, h);
        prop_assert!(norm(&y) <= p.radius(h));
        prop_assert_eq!(p.project(&y, h), y.clone());
        if norm(&x) <= p.radius(h) {
            prop_assert_eq!(y, x);
        }
    }

    #[test]
    fn componentwise_projection_is_idempotent(x in vec_in(2, 1e4), radius in 0.1f64..100.0) {
        let mut y = x.clone();
        project_in_place(&mut y, radius, ProjectionVariant::Componentwise);
        let mut z = y.clone();
        project_in_place(&mut z, radius, ProjectionVariant::Componentwise);
        prop_assert_eq!(&y, &z);
        prop_assert!(norm(&y) <= radius * (1.0 + 1e-12));
    }

    #[test]
    fn noise_clamp_invariants(xi in vec_in(4, 20.0), k in 1u32..20) {
        let h = 2f64.powi(-(k as i32));
        let a = truncation_level(h).unwrap();
        let z = truncate_noise(&xi, h).unwrap();
        for (u, v) in xi.iter().zip(&z) {
            prop_assert!(v.abs() <= a);
            prop_assert_eq!(v.signum(), u.signum());
            if u.abs() <= a {
                prop_assert_eq!(u, v);
            }
        }
        prop_assert_eq!(truncate_noise(&z, h).unwrap(), z);
    }

    #[test]
    fn case_i_identity(x in vec_in(3, 1e3), h in 1e-6f64..1.0, c in 0.0f64..50.0) {
        let t = Taming::case_i(move |x: &[f64], h| c * norm(x) * h.sqrt());
        let lhs = 1.0 + t.g_b(&x, h);
        let rhs = (1.0 + t.g_sigma(&x, h)).powi(2);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
    }

    #[test]
    fn coarse_increments_are_fine_sums(seed in any::<u64>(), j in 0u32..5) {
        let lat = BrownianLattice::new(1.0, 1.0 / 64.0, 2).unwrap();
        let fine = lat.draw(&mut ChaCha12Rng::seed_from_u64(seed));
        let f = 1usize << j;
        let coarse = lat.coarsen(&fine, f);
        for (k, row) in coarse.chunks(2).enumerate() {
            for c in 0..2 {
                let mut s = 0.0;
                for i in 0..f {
                    s += fine[(k * f + i) * 2 + c];
                }
                prop_assert_eq!(row[c].to_bits(), s.to_bits());
            }
        }
    }

    #[test]
    fn norm_power_matches_finite_differences(x in vec_in(1, 20.0), p in 2.0f64..6.0) {
        let v = NormPower::new(p, 10.0);
        let r = finite_difference_check(&v, &[x]);
        prop_assert!(r.pass, "{:?}", r);
    }

    #[test]
    fn vdp_lyapunov_matches_finite_differences(x in vec_in(2, 20.0)) {
        let r = finite_difference_check(&WeightedPoly::vdp(), &[x]);
        prop_assert!(r.pass, "{:?}", r);
    }

    #[test]
    fn v_integrability_tolerance_is_monotone(
        means in prop::collection::vec(0.0f64..5.0, 2..20),
        se in 0.0f64..0.5,
        m1 in 0.0f64..6.0,
        dm in 0.0f64..6.0,
    ) {
        let trace = FunctionalTrace {
            name: "mean_v".into(),
            stats: means
                .iter()
                .map(|m| StepStats { n: 10, mean: *m, std_err: se, max: *m, sum: 10.0 * m })
                .collect(),
        };
        let p = VBoundParams { rho: 0.0, rho_tilde: 0.5, t_end: 1.0, ev0: 1.0 };
        let r = estimate_v_integrability(&trace, 0.0, p, m1);
        prop_assert!(!r.passes_at(m1) || r.passes_at(m1 + dm));
    }

    #[test]
    fn exponential_fit_recovers_rate(rate in -5.0f64..5.0, c in 0.1f64..10.0) {
        let times: Vec<f64> = (0..=200).map(|k| k as f64 / 40.0).collect();
        let means: Vec<f64> = times.iter().map(|t| c * (rate * t).exp()).collect();
        let f = fit_exponential_rate(&times, &means, Window::burn_in(5.0)).unwrap();
        prop_assert!((f.slope - rate).abs() <= 1e-12 * (1.0 + rate.abs()));
    }
}

#[test]
fn ensembles_are_bitwise_reproducible_across_thread_counts() {
    let scheme = Scheme::new(
        Arc::new(Lorenz::new(LorenzParams::default()).unwrap()),
        SchemeConfig::new(SchemeKind::Projected, 1.0 / 32.0, 1.0)
            .with_projection(ProjectionConfig::radial(0.45)),
    )
    .unwrap();
    let cfg = EnsembleConfig::new(300, 77, InitialState::point(vec![1.0, 1.0, 1.0]))
        .with_functional(Functional::SqNorm)
        .with_functional(Functional::Norm);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_ensemble(&scheme, &cfg))
    };
    let (a, b) = (run(1), run(4));
    for (ta, tb) in a.traces.iter().zip(&b.traces) {
        for (sa, sb) in ta.stats.iter().zip(&tb.stats) {
            assert_eq!(sa.mean.to_bits(), sb.mean.to_bits());
            assert_eq!(sa.std_err.to_bits(), sb.std_err.to_bits());
        }
    }
    assert_eq!(a.terminal, b.terminal);
}

#[test]
fn random_initial_states_are_reproducible() {
    let scheme = Scheme::new(
        Arc::new(Cubic),
        SchemeConfig::new(SchemeKind::Projected, 1.0 / 16.0, 1.0)
            .with_projection(ProjectionConfig::radial(0.225)),
    )
    .unwrap();
    let cfg = EnsembleConfig {
        n_paths: 100,
        rng: RngSpec::new(5),
        x0: InitialState::UniformBall {
            center: vec![0.0],
            radius: 2.0,
        },
        functionals: vec![Functional::SqNorm],
        keep_paths: 3,
    };
    let a = simulate_ensemble(&scheme, &cfg);
    let b = simulate_ensemble(&scheme, &cfg);
    assert_eq!(a.trajectories, b.trajectories);
    assert!(a.trajectories.iter().all(|t| t[0][0].abs() <= 2.0));
    assert_ne!(a.trajectories[0][0], a.trajectories[1][0]);
}
