mod common;

use bbmmi_core::engine::{
    run, uniform_grid, Dynamics, EngineConfig, InteractionPolicy, Jump, Policy, Simulator, Snapshot, SystemState,
};
use bbmmi_core::estimators::{
    lambda_bar, lambda_bar_batch, lambda_hat, many_to_one, normalized, normalized_rmse, pf_lambda, pf_window_stream,
    simulate_batch, stationary_metrics, BatchSpec, Observable, PfConfig, ReplicaBatch,
};
use bbmmi_core::models::{bd_killed_make, benchmark, BdState};
use bbmmi_core::oracle::{leading_triple, semigroup_apply, tilted_generator};
use bbmmi_core::rng::derive_stream;
use bbmmi_core::stats::log_mean_exp;
use common::Const;
use nalgebra::DVector;

fn batch<D, P, F>(
    d: &D,
    policy: &P,
    init: &SystemState<D::State, D::Env>,
    f: &F,
    horizon: f64,
    dt: f64,
    reps: u64,
    seed: u64,
) -> ReplicaBatch
where
    D: Dynamics,
    P: InteractionPolicy<D::State>,
    F: Fn(&D::State) -> f64 + Sync,
{
    let grid = uniform_grid(horizon, dt);
    let spec = BatchSpec {
        seed,
        role: "estimators",
        replicas: reps,
        horizon,
        grid: &grid,
        config: EngineConfig::default(),
    };
    let runs = simulate_batch(d, policy, |_| init.clone(), f, &spec)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .unwrap();
    ReplicaBatch::from_runs(seed, runs).unwrap()
}

fn one<S>(_: &S) -> f64 {
    1.0
}

#[test]
fn many_to_one_single_state_growth() {
    let d = Jump::new(Const {
        motion: 0.0,
        branch: 0.5,
        kill: 0.0,
    });
    let init = SystemState::from_states(vec![0u32; 4]);
    let b = batch(&d, &Policy::Independent, &init, &one, 1.0, 0.5, 10_000, 1);
    let est = many_to_one(&b, Observable::One, 1.0).unwrap();
    let exact = 4.0 * 0.5f64.exp();
    assert!((est.value - exact).abs() <= 3.0 * est.std_error, "{est:?} vs {exact}");
}

#[test]
fn many_to_one_nmin_nmax_matches_oracle() {
    let m = benchmark(Some(5)).unwrap();
    let g = tilted_generator(&m, &m.enumerate().unwrap(), &()).unwrap();
    let x2 = m.state(&[2]).unwrap();
    let q1 = semigroup_apply(&g, &DVector::from_element(g.len(), 1.0), 1.0).unwrap();
    let exact = 3.0 * q1[g.index_of(&x2).unwrap()];
    let d = Jump::new(m);
    let policy = Policy::nmin_nmax(2, Some(6)).unwrap();
    let init = SystemState::from_states(vec![x2; 3]);
    let b = batch(&d, &policy, &init, &one, 1.0, 0.5, 10_000, 2);
    let est = many_to_one(&b, Observable::One, 1.0).unwrap();
    assert!((est.value - exact).abs() <= 3.0 * est.std_error, "{est:?} vs {exact}");
}

#[test]
fn fleming_viot_many_to_one_uses_the_tilt_identity() {
    let cap = 5;
    let t = 0.5;
    let m = benchmark(Some(cap)).unwrap();
    let g = tilted_generator(&m, &m.enumerate().unwrap(), &()).unwrap();
    let x1 = m.state(&[1]).unwrap();
    let q1 = semigroup_apply(&g, &DVector::from_element(g.len(), 1.0), t).unwrap();
    let exact = 4.0 * (-f64::from(cap) * t).exp() * q1[g.index_of(&x1).unwrap()];
    let d = Jump::new(bd_killed_make(Some(cap)).unwrap());
    let init = SystemState::from_states(vec![x1; 4]);
    let b = batch(&d, &Policy::Moran, &init, &one, t, t, 10_000, 3);
    let est = many_to_one(&b, Observable::One, t).unwrap();
    assert!((est.value - exact).abs() <= 3.0 * est.std_error, "{est:?} vs {exact}");
}

#[test]
fn normalized_measure_at_a_single_state() {
    let d = Jump::new(Const {
        motion: 0.0,
        branch: 1.0,
        kill: 0.0,
    });
    let init = SystemState::from_states(vec![6u32; 3]);
    let b = batch(
        &d,
        &Policy::Independent,
        &init,
        &|x: &u32| f64::from(*x),
        1.0,
        0.5,
        3,
        4,
    );
    for r in b.replicas() {
        assert!(r.iter().all(|s| normalized(s) == Some(6.0)));
    }
}

#[test]
fn normalized_measure_approaches_nu() {
    let m = benchmark(Some(10)).unwrap();
    let g = tilted_generator(&m, &m.enumerate().unwrap(), &()).unwrap();
    let nu_f = leading_triple(&g)
        .unwrap()
        .nu_of(&g.vector(&|s: &BdState| f64::from(s[0])));
    let x1 = m.state(&[1]).unwrap();
    let d = Jump::new(m);
    let policy = Policy::fixed_size(100).unwrap();
    let init = SystemState::from_states(vec![x1; 100]);
    let b = batch(&d, &policy, &init, &|s: &BdState| f64::from(s[0]), 20.0, 20.0, 50, 5);
    let rmse = normalized_rmse(&b, 20.0, nu_f).unwrap();
    assert!(rmse < 0.15, "{rmse}");
}

#[test]
fn lambda_hat_constant_killing_under_fleming_viot() {
    let kappa = 0.7;
    let d = Jump::new(Const {
        motion: 1.0,
        branch: 0.0,
        kill: kappa,
    });
    let init = SystemState::from_states(vec![0u32; 100]);
    let mut rng = derive_stream(6, 0, "lambda");
    let t = run(
        &d,
        &Policy::Moran,
        init,
        200.0,
        &[0.0, 200.0],
        &one,
        EngineConfig::default(),
        &mut rng,
    )
    .unwrap();
    let l = lambda_hat(&t.snapshots).unwrap();
    assert!((l + kappa).abs() < 0.05, "{l}");
}

#[test]
fn estimators_recover_a_single_state_rate() {
    for r in [0.5f64, -0.5] {
        let d = Jump::new(Const {
            motion: 0.0,
            branch: r.max(0.0),
            kill: (-r).max(0.0),
        });
        let init = SystemState::from_states(vec![0u32; 200]);
        let mut rng = derive_stream(7, 0, "lambda");
        let grid = uniform_grid(20.0, 0.5);
        let t = run(
            &d,
            &Policy::Moran,
            init.clone(),
            20.0,
            &grid,
            &one,
            EngineConfig::default(),
            &mut rng,
        )
        .unwrap();
        let hat = lambda_hat(&t.snapshots).unwrap();
        let bar = lambda_bar(&t.snapshots).unwrap();
        let pf = pf_lambda(
            &PfConfig {
                horizon: 5.0,
                window: 0.5,
                systems: 20,
                ess_threshold: 1.0,
                engine: EngineConfig::default(),
            },
            &d,
            &Policy::Moran,
            &init,
            7,
        )
        .unwrap();
        for (name, v) in [("hat", hat), ("bar", bar), ("pf", pf.lambda)] {
            assert!((v - r).abs() < 0.05, "{name} {v} vs {r}");
        }
    }
}

#[test]
fn lambda_bar_tracks_the_oracle() {
    let m = benchmark(Some(10)).unwrap();
    let g = tilted_generator(&m, &m.enumerate().unwrap(), &()).unwrap();
    let lambda = leading_triple(&g).unwrap().lambda;
    let x1 = m.state(&[1]).unwrap();
    let d = Jump::new(m);
    let policy = Policy::fixed_size(100).unwrap();
    let init = SystemState::from_states(vec![x1; 100]);
    let b = batch(&d, &policy, &init, &one, 2000.0, 1.0, 1, 8);
    let est = lambda_bar_batch(&b).unwrap();
    assert!((est.value - lambda).abs() < 0.05, "{} vs {lambda}", est.value);
}

#[test]
fn lambda_estimators_vanish_without_interactions() {
    let d = Jump::new(Const {
        motion: 2.0,
        branch: 0.0,
        kill: 0.0,
    });
    let init = SystemState::from_states(vec![0u32; 5]);
    let b = batch(&d, &Policy::Moran, &init, &one, 4.0, 0.5, 1, 9);
    assert_eq!(lambda_hat(&b.replicas()[0]).unwrap(), 0.0);
    assert_eq!(lambda_bar(&b.replicas()[0]).unwrap(), 0.0);
    let config = PfConfig {
        horizon: 4.0,
        window: 0.5,
        systems: 8,
        ess_threshold: 1.0,
        engine: EngineConfig::default(),
    };
    assert_eq!(pf_lambda(&config, &d, &Policy::Moran, &init, 9).unwrap().lambda, 0.0);
}

/// One system run window by window on the filter's own streams.
fn windowed_log_growth<D: Dynamics, P: InteractionPolicy<D::State>>(
    d: &D,
    policy: &P,
    init: &SystemState<D::State, D::Env>,
    seed: u64,
    slot: usize,
    windows: &[f64],
) -> f64 {
    let mut sys = init.clone();
    for (w, span) in windows.windows(2).enumerate() {
        let mut rng = pf_window_stream(seed, w, slot);
        let mut sim = Simulator::new(d, policy, sys, EngineConfig::default());
        sim.advance_to(span[1], &mut rng).unwrap();
        sys = sim.into_parts().0;
    }
    let start = Snapshot::of(init, &one);
    let end = Snapshot::of(&sys, &one);
    lambda_hat(&[start, end]).unwrap() * (end.time - start.time)
}

#[test]
fn single_system_filter_is_lambda_hat() {
    let m = benchmark(Some(10)).unwrap();
    let x1 = m.state(&[1]).unwrap();
    let d = Jump::new(m);
    let policy = Policy::fixed_size(10).unwrap();
    let init = SystemState::from_states(vec![x1; 10]);
    let config = PfConfig {
        horizon: 4.0,
        window: 0.4,
        systems: 1,
        ess_threshold: 1.0,
        engine: EngineConfig::default(),
    };
    let pf = pf_lambda(&config, &d, &policy, &init, 10).unwrap();
    let windows: Vec<f64> = (0..=10).map(|k| (k as f64 * 0.4).min(4.0)).collect();
    let direct = windowed_log_growth(&d, &policy, &init, 10, 0, &windows) / 4.0;
    assert!((pf.lambda - direct).abs() < 1e-12, "{} vs {direct}", pf.lambda);
}

#[test]
fn filter_without_resampling_averages_full_weights() {
    let m = benchmark(Some(10)).unwrap();
    let x1 = m.state(&[1]).unwrap();
    let d = Jump::new(m);
    let policy = Policy::fixed_size(5).unwrap();
    let init = SystemState::from_states(vec![x1; 5]);
    let config = PfConfig {
        horizon: 2.0,
        window: 0.5,
        systems: 6,
        ess_threshold: 0.0,
        engine: EngineConfig::default(),
    };
    let pf = pf_lambda(&config, &d, &policy, &init, 11).unwrap();
    assert_eq!(pf.resamplings, 0);
    let windows = [0.0, 0.5, 1.0, 1.5, 2.0];
    let logs: Vec<f64> = (0..6)
        .map(|slot| windowed_log_growth(&d, &policy, &init, 11, slot, &windows))
        .collect();
    let direct = log_mean_exp(&logs) / 2.0;
    assert!((pf.lambda - direct).abs() < 1e-12, "{} vs {direct}", pf.lambda);
}

#[test]
fn frozen_system_has_zero_metrics() {
    let d = Jump::new(Const {
        motion: 0.0,
        branch: 0.0,
        kill: 0.0,
    });
    let init = SystemState::from_states(vec![3u32; 4]);
    let b = batch(&d, &Policy::Moran, &init, &|x: &u32| f64::from(*x), 10.0, 1.0, 5, 12);
    let r = stationary_metrics(&b, 3.0, 0.2).unwrap();
    assert_eq!((r.bias, r.std, r.event_rate), (0.0, 0.0, 0.0));
}
