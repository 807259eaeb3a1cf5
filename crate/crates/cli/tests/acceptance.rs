//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::time::Instant;

use bbmmi_cli::commands::{cmd_simulate, table_rows, TableOptions, TableRow};
use bbmmi_cli::config::ExperimentConfig;
use bbmmi_core::engine::{run, uniform_grid, EngineConfig, Flow, Jump, Policy, Simulator, SystemState};
use bbmmi_core::estimators::{
    lambda_hat, many_to_one, normalized_rmse, pf_lambda, simulate_batch, stationary_metrics, BatchSpec, MetricReport,
    Observable, PfConfig, ReplicaBatch,
};
use bbmmi_core::model::{FlowEvent, FlowModel};
use bbmmi_core::models::{
    bd_killed_make, benchmark, nrw_lh_over_h, nrw_make, phi, phi_prime, BdState, BirthDeath, NrwMotion, NrwSlabSpec,
};
use bbmmi_core::oracle::{leading_triple, leading_triple_dense, semigroup_apply, tilted_generator, TiltedGenerator};
use bbmmi_core::rng::{derive_stream, uniform};
use bbmmi_core::stats::{mean, std_error};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bench_generator(cap: u32) -> (BirthDeath, TiltedGenerator<BdState>) {
    let m = benchmark(Some(cap)).unwrap();
    let g = tilted_generator(&m, &m.enumerate().unwrap(), &()).unwrap();
    (m, g)
}

fn x_of(s: &BdState) -> f64 {
    f64::from(s[0])
}

fn batch(
    model: BirthDeath,
    policy: Policy,
    start: u32,
    n0: usize,
    horizon: f64,
    dt: f64,
    reps: u64,
    seed: u64,
) -> ReplicaBatch {
    let x = model.state(&[start]).unwrap();
    let init = SystemState::from_states(vec![x; n0]);
    let d = Jump::new(model);
    let grid = uniform_grid(horizon, dt);
    let spec = BatchSpec {
        seed,
        role: "acceptance",
        replicas: reps,
        horizon,
        grid: &grid,
        config: EngineConfig::default(),
    };
    let runs = simulate_batch(&d, &policy, |_| init.clone(), &x_of, &spec)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .unwrap();
    ReplicaBatch::from_runs(seed, runs).unwrap()
}

fn many_to_one_identity() -> Outcome {
    let (m, g) = bench_generator(5);
    let x2 = m.state(&[2]).unwrap();
    let q1 = semigroup_apply(&g, &g.vector(&|_: &BdState| 1.0), 1.0).unwrap();
    let exact = 3.0 * q1[g.index_of(&x2).unwrap()];
    let b = batch(m, Policy::nmin_nmax(2, Some(6)).unwrap(), 2, 3, 1.0, 1.0, 20_000, 101);
    let est = many_to_one(&b, Observable::One, 1.0).unwrap();
    let z = (est.value - exact) / est.std_error;
    check(
        z.abs() <= 3.0,
        format!(
            "estimate {:.5} +- {:.5}, oracle {exact:.5}, z = {z:.2}",
            est.value, est.std_error
        ),
    )
}

fn l2_scaling() -> Outcome {
    let (_, g) = bench_generator(10);
    let nu_f = leading_triple(&g).unwrap().nu_of(&g.vector(&x_of));
    let sizes = [8usize, 16, 32, 64, 128, 256];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, &n) in sizes.iter().enumerate() {
        let b = batch(
            benchmark(Some(10)).unwrap(),
            Policy::fixed_size(n).unwrap(),
            1,
            n,
            5.0,
            5.0,
            500,
            200 + k as u64,
        );
        let rmse = normalized_rmse(&b, 5.0, nu_f).unwrap();
        xs.push((n as f64).ln());
        ys.push(rmse.ln());
    }
    let (mx, my) = (mean(&xs), mean(&ys));
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    check(
        (-0.7..=-0.3).contains(&slope),
        format!(
            "log-log slope {slope:.3}; rmse {:?}",
            ys.iter().map(|y| format!("{:.4}", y.exp())).collect::<Vec<_>>()
        ),
    )
}

struct Reference {
    label: &'static str,
    bias: f64,
    std: f64,
    rate: f64,
}

fn within_bands(m: &MetricReport, p: &Reference) -> (bool, String) {
    let ok = (m.bias - p.bias).abs() <= 0.05
        && ((m.std - p.std) / p.std).abs() <= 0.30
        && ((m.event_rate - p.rate) / p.rate).abs() <= 0.25;
    let line = format!(
        "{}: {:.3}/{:.3}/{:.1} vs {}/{}/{}",
        p.label, m.bias, m.std, m.event_rate, p.bias, p.std, p.rate
    );
    (ok, line)
}

fn row(rows: &[TableRow], cap: u32, algorithm: &str) -> MetricReport {
    rows.iter()
        .find(|r| r.cap == Some(cap) && r.algorithm == algorithm)
        .and_then(|r| r.metrics.clone().ok())
        .expect("row present")
}

fn table_options(name: &str, caps: &[u32], seed: u64) -> TableOptions {
    let mut o = TableOptions::preset(name).unwrap();
    o.caps = caps.iter().map(|&c| Some(c)).collect();
    o.seed = seed;
    o
}

fn table_reproduction(t1: &[TableRow], t2: &[TableRow]) -> Outcome {
    let checks = [
        (
            row(t1, 10, "nmin-nmax"),
            Reference {
                label: "T1 M=10 NN",
                bias: 0.08,
                std: 0.30,
                rate: 14.0,
            },
        ),
        (
            row(t1, 10, "fv"),
            Reference {
                label: "T1 M=10 FV",
                bias: 0.10,
                std: 0.41,
                rate: 87.2,
            },
        ),
        (
            row(t1, 100, "fv"),
            Reference {
                label: "T1 M=100 FV",
                bias: 0.20,
                std: 0.51,
                rate: 988.0,
            },
        ),
        (
            row(t2, 10, "nmin-nmax"),
            Reference {
                label: "T2 M=10 NN",
                bias: 0.01,
                std: 0.12,
                rate: 144.0,
            },
        ),
        (
            row(t2, 10, "fv"),
            Reference {
                label: "T2 M=10 FV",
                bias: 0.02,
                std: 0.18,
                rate: 857.0,
            },
        ),
    ];
    let mut all = true;
    let mut lines = Vec::new();
    for (m, p) in &checks {
        let (ok, line) = within_bands(m, p);
        all &= ok;
        lines.push(format!("{line}{}", if ok { "" } else { " (out of band)" }));
    }
    check(all, lines.join("; "))
}

fn m_independence(t1: &[TableRow]) -> Outcome {
    let nn1000 = {
        let (_, g) = bench_generator(1000);
        let nu_f = leading_triple(&g).unwrap().nu_of(&g.vector(&x_of));
        let b = batch(
            benchmark(Some(1000)).unwrap(),
            Policy::fixed_size(10).unwrap(),
            1,
            10,
            200.0,
            0.1,
            200,
            401,
        );
        stationary_metrics(&b, nu_f, 0.2).unwrap()
    };
    let rates = [
        row(t1, 10, "nmin-nmax").event_rate,
        row(t1, 100, "nmin-nmax").event_rate,
        nn1000.event_rate,
    ];
    let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rates.iter().copied().fold(0.0, f64::max);
    let spread = (hi - lo) / mean(&rates);
    let growth = row(t1, 100, "fv").event_rate / row(t1, 10, "fv").event_rate;
    check(
        spread < 0.05 && growth >= 8.0,
        format!(
            "NN rates {rates:.2?} (spread {:.1}%), FV growth x{growth:.1}",
            100.0 * spread
        ),
    )
}

fn branching_moment() -> Outcome {
    let b = batch(
        benchmark(Some(10)).unwrap(),
        Policy::nmin_nmax(2, Some(10)).unwrap(),
        1,
        10,
        0.5,
        0.5,
        10_000,
        501,
    );
    let squares: Vec<f64> = b
        .replicas()
        .iter()
        .map(|r| (2.0 * r[r.len() - 1].log_pi_b).exp())
        .collect();
    let upper = mean(&squares) + 2.326_347_874_040_841 * std_error(&squares);
    let bound = (2.5f64 * 10.0 * 0.5).exp();
    check(
        upper <= bound,
        format!("99% upper bound {upper:.3} vs exp(12.5) = {bound:.0}"),
    )
}

fn lambda_estimators() -> Outcome {
    let (m, g) = bench_generator(10);
    let lambda = leading_triple(&g).unwrap().lambda;
    let x1 = m.state(&[1]).unwrap();
    let d = Jump::new(m);
    let policy = Policy::fixed_size(100).unwrap();
    let init = SystemState::from_states(vec![x1; 100]);
    let pf_config = PfConfig {
        horizon: 40.0,
        window: 0.4,
        systems: 100,
        ess_threshold: 1.0,
        engine: EngineConfig::default(),
    };
    let mut closer = 0;
    let mut worst_pf: f64 = 0.0;
    let mut hats = Vec::new();
    let mut pfs = Vec::new();
    for rep in 0..10u64 {
        let mut rng = derive_stream(600 + rep, 0, "single");
        let t = run(
            &d,
            &policy,
            init.clone(),
            4000.0,
            &[0.0, 4000.0],
            &x_of,
            EngineConfig::default(),
            &mut rng,
        )
        .unwrap();
        let hat = lambda_hat(&t.snapshots).unwrap();
        let pf = pf_lambda(&pf_config, &d, &policy, &init, 600 + rep).unwrap().lambda;
        if (pf - lambda).abs() < (hat - lambda).abs() {
            closer += 1;
        }
        worst_pf = worst_pf.max((pf - lambda).abs());
        hats.push(hat);
        pfs.push(pf);
    }
    check(
        closer >= 8 && worst_pf < 0.05,
        format!(
            "oracle {lambda:.4}; filter closer in {closer}/10; worst filter error {worst_pf:.4}; mean hat {:.4}, mean filter {:.4}",
            mean(&hats),
            mean(&pfs)
        ),
    )
}

#[derive(Debug, Clone)]
enum Degeneration {
    Independent,
    Moran,
    Band { nmin: usize, nmax: usize },
}

fn degeneration_case() -> impl Strategy<Value = (Degeneration, bool, u32, usize, f64, u64)> {
    let kind = prop_oneof![Just(0usize), Just(1usize), Just(2usize),];
    (
        kind,
        any::<bool>(),
        3u32..20,
        2usize..7,
        0usize..7,
        0.1f64..3.0,
        any::<u64>(),
    )
        .prop_map(|(kind, killed, cap, nmin, extra, horizon, seed)| {
            let nmax = nmin + extra;
            let d = match kind {
                0 => Degeneration::Independent,
                1 => Degeneration::Moran,
                _ => Degeneration::Band { nmin, nmax },
            };
            let n0 = match d {
                Degeneration::Band { .. } => nmin + extra / 2,
                _ => nmin + extra,
            };
            (d, killed, cap, n0, horizon, seed)
        })
}

fn degenerations() -> Outcome {
    let mut runner = TestRunner::new(PropConfig {
        cases: 1000,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let result = runner.run(&degeneration_case(), |(kind, killed, cap, n0, horizon, seed)| {
        let model = if killed {
            bd_killed_make(Some(cap)).unwrap()
        } else {
            benchmark(Some(cap)).unwrap()
        };
        let start = model.state(&[1 + seed as u32 % cap]).unwrap();
        let policy = match kind {
            Degeneration::Independent => Policy::Independent,
            Degeneration::Moran => Policy::Moran,
            Degeneration::Band { nmin, nmax } => Policy::nmin_nmax(nmin, Some(nmax)).unwrap(),
        };
        let d = Jump::new(model);
        let mut rng = derive_stream(seed, 0, "degeneration");
        let t = run(
            &d,
            &policy,
            SystemState::from_states(vec![start; n0]),
            horizon,
            &uniform_grid(horizon, 0.01),
            &x_of,
            EngineConfig::default(),
            &mut rng,
        )
        .unwrap();
        for s in &t.snapshots {
            match kind {
                Degeneration::Independent => prop_assert!(s.log_pi_a == 0.0 && s.log_pi_b == 0.0),
                Degeneration::Moran => prop_assert_eq!(s.size, n0),
                Degeneration::Band { nmin, nmax } => prop_assert!((nmin..=nmax).contains(&s.size)),
            }
        }
        Ok(())
    });
    match result {
        Ok(()) => Ok("1000 randomized configurations, no violations".into()),
        Err(e) => Err(format!("{e}")),
    }
}

fn nrw_properties() -> Outcome {
    let spec = NrwSlabSpec::preset();
    let m = nrw_make(spec.clone()).unwrap();
    let delta = m.delta();
    let mut problems = Vec::new();

    let motion = Flow::new(NrwMotion(m.clone()));
    let mut hits = 0;
    for rep in 0..1000u64 {
        let mut rng = derive_stream(800, rep, "nrw");
        let x = m.state(0.01 + 3.98 * uniform(&mut rng), (rep % 4) as usize).unwrap();
        let mut sim = Simulator::new(
            &motion,
            &Policy::Independent,
            SystemState::from_states([x]),
            EngineConfig::default(),
        );
        sim.advance_to(20.0, &mut rng).unwrap();
        hits += sim.state().counters().hard_kills;
    }
    if hits > 0 {
        problems.push(format!("{hits} boundary hits"));
    }

    let exits = |r: f64| -> Vec<f64> {
        spec.velocities
            .iter()
            .map(|&v| phi(if v > 0.0 { (spec.length - r) / v } else { r / -v }, delta))
            .collect()
    };
    let mut worst_tv: f64 = 0.0;
    let mut rng = derive_stream(801, 0, "nrw");
    let scatter = NrwMotion(m.clone());
    for &(r, v) in &[(0.1, 0usize), (3.85, 3), (0.3, 1), (2.0, 2)] {
        let x = m.state(r, v).unwrap();
        let h = exits(r);
        let total: f64 = h.iter().sum();
        let n = 100_000;
        let mut freq = vec![0.0; 4];
        for _ in 0..n {
            if let FlowEvent::Jump(y) = scatter.sample_event(&x, &mut rng) {
                freq[y.v] += 1.0 / n as f64;
            }
        }
        let tv = 0.5 * freq.iter().zip(&h).map(|(f, hv)| (f - hv / total).abs()).sum::<f64>();
        worst_tv = worst_tv.max(tv);
    }
    if worst_tv > 0.02 {
        problems.push(format!("kernel TV {worst_tv:.4}"));
    }

    let eps = 1e-8;
    let mut worst_fd: f64 = 0.0;
    let mut checked = 0;
    while checked < 100 {
        let r = 0.01 + 3.98 * uniform(&mut rng);
        let v = (uniform(&mut rng) * 4.0) as usize;
        let x = m.state(r, v).unwrap();
        let kappa = m.exit_time(&x);
        if [0.5 * delta, delta].iter().any(|k| (kappa - k).abs() < 1e-5) || kappa < 1e-5 {
            continue;
        }
        let speed = spec.velocities[v];
        let fd = (m.h(&m.state(r + speed * eps, v).unwrap(), v) - m.h(&m.state(r - speed * eps, v).unwrap(), v))
            / (2.0 * eps);
        let h = m.h(&x, v);
        let integral = exits(r).iter().sum::<f64>() / 4.0 - h;
        let transport = m.lh_over_h(&x) * h - integral;
        worst_fd = worst_fd
            .max((fd - transport).abs())
            .max((fd + phi_prime(kappa, delta)).abs());
        checked += 1;
    }
    if worst_fd > 1e-6 {
        problems.push(format!("finite-difference gap {worst_fd:.2e}"));
    }

    let mut worst_lh = f64::NEG_INFINITY;
    for v in 0..4 {
        let speed: f64 = spec.velocities[v];
        for k in 1..200 {
            let kappa = 0.5 * delta * k as f64 / 200.0;
            let r = if speed > 0.0 {
                spec.length - kappa * speed
            } else {
                -kappa * speed
            };
            let x = m.state(r, v).unwrap();
            worst_lh = worst_lh.max(nrw_lh_over_h(&spec, r, v) * m.h(&x, v));
        }
    }
    if worst_lh > -0.5 * (1.0 - 1e-9) {
        problems.push(format!("near-boundary Lh {worst_lh:.4}"));
    }
    check(
        problems.is_empty(),
        if problems.is_empty() {
            format!("0 hits in 1000 runs; TV {worst_tv:.4}; FD gap {worst_fd:.1e}; max near-boundary Lh {worst_lh:.4}")
        } else {
            problems.join("; ")
        },
    )
}

fn oracle_consistency() -> Outcome {
    let (_, g) = bench_generator(10);
    let f = g.vector(&x_of);
    let whole = semigroup_apply(&g, &f, 1.0).unwrap();
    let split = semigroup_apply(&g, &semigroup_apply(&g, &f, 0.4).unwrap(), 0.6).unwrap();
    let semigroup = (&whole - &split).amax() / whole.amax();
    let triple = leading_triple(&g).unwrap();
    let residual = triple.residual(g.matrix());
    let dense = leading_triple_dense(&g).unwrap();
    let agreement = (triple.lambda - dense.lambda).abs();
    let killed = bd_killed_make(Some(5)).unwrap();
    let gk = tilted_generator(&killed, &killed.enumerate().unwrap(), &()).unwrap();
    let (_, g5) = bench_generator(5);
    let one = g5.vector(&|_: &BdState| 1.0);
    let psi = semigroup_apply(&g5, &one, 0.3).unwrap();
    let psi_k = semigroup_apply(&gk, &one, 0.3).unwrap() * (5.0f64 * 0.3).exp();
    let tilt = (&psi - &psi_k).amax() / psi.amax();
    check(
        semigroup <= 1e-9 && residual <= 1e-10 && agreement <= 1e-10 && tilt <= 1e-8,
        format!("semigroup {semigroup:.1e}; residual {residual:.1e}; dense gap {agreement:.1e}; tilt {tilt:.1e}"),
    )
}

fn body(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

fn determinism() -> Outcome {
    let text = "[model]\npreset = \"benchmark\"\ncap = 10\n[policy]\nkind = \"competitive\"\n\
                [run]\nparticles = 8\nhorizon = 5.0\ndt = 0.25\nreplicas = 40\nseed = 9\nrecord_events = true\n";
    let mut config = ExperimentConfig::parse(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut bodies = Vec::new();
    for (k, workers) in [1usize, 1, 4].into_iter().enumerate() {
        config.run.workers = workers;
        let out = dir.path().join(format!("run{k}"));
        let res = cmd_simulate(&config, &out, false).unwrap();
        bodies.push((body(&res.snapshots), body(&res.events.unwrap())));
    }
    let same = bodies.windows(2).all(|w| w[0] == w[1]);
    check(
        same,
        format!(
            "3 runs (workers 1, 1, 4): {} snapshot bytes, identical = {same}",
            bodies[0].0.len()
        ),
    )
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |n: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let outcome = f();
        let status = if outcome.is_ok() { "PASS" } else { "FAIL" };
        let detail = match &outcome {
            Ok(d) | Err(d) => d.clone(),
        };
        println!(
            "criterion {n:>2} {status} {name} ({:.1} s): {detail}",
            t.elapsed().as_secs_f64()
        );
        results.push((n, name, outcome));
    };
    record(1, "many-to-one identity", &many_to_one_identity);
    record(2, "L2 scaling", &l2_scaling);
    let t1 = table_rows(&table_options("table1", &[10, 100], 301)).unwrap();
    let t2 = table_rows(&table_options("table2", &[10], 302)).unwrap();
    record(3, "table reproduction", &|| table_reproduction(&t1, &t2));
    record(4, "M-independence of interaction cost", &|| m_independence(&t1));
    record(5, "branching moment bound", &branching_moment);
    record(6, "growth-rate estimators", &lambda_estimators);
    record(7, "degenerations", &degenerations);
    record(8, "slab walk properties", &nrw_properties);
    record(9, "oracle self-consistency", &oracle_consistency);
    record(10, "determinism", &determinism);
    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.0} s",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
