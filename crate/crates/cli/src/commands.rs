//! Subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bbmmi_core::engine::io::{write_events, write_snapshot_header, write_snapshots};
use bbmmi_core::engine::{uniform_grid, Dynamics, EngineConfig, EngineError, Flow, Jump, Policy, SystemState};
use bbmmi_core::estimators::{
    lambda_bar, lambda_hat, pf_lambda, simulate_batch, stationary_metrics, BatchSpec, PfConfig, ReplicaBatch,
};
use bbmmi_core::models::{
    bd_killed_make, bd_make, benchmark, brw_make, brw_shared_make, nrw_make, BdState, BirthDeath, BirthDeathSpec,
    BrwSpec, BrwState, NrwSlabSpec, Regime,
};
use bbmmi_core::oracle::{leading_triple, reachable_states, semigroup_apply, tilted_generator, MAX_STATES};
use bbmmi_core::rng::derive_stream;
use bbmmi_core::stats::{mean, std_error};
use rand::RngCore;
use serde::Serialize;

use crate::config::{BrwConfig, ExperimentConfig, ModelConfig, ObservableConfig};
use crate::error::CliError;
use crate::output::{self, num, RunStatus};

/// Exact quantities for finite-state models.
#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub lambda: f64,
    pub nu_f: f64,
    /// `N0 (Q_T f)(x0)` at the run horizon.
    pub m0_qf: f64,
    pub states: Vec<String>,
    pub eta: Vec<f64>,
    pub nu: Vec<f64>,
    /// Set when an unbounded chain was truncated for the oracle.
    pub truncated_at: Option<u32>,
}

/// A model ready to simulate.
pub struct Prepared<D: Dynamics> {
    pub dynamics: D,
    pub initial: SystemState<D::State, D::Env>,
    pub observable: Box<dyn Fn(&D::State) -> f64 + Send + Sync>,
    pub oracle: Option<OracleSummary>,
}

/// Work that can run on any model.
pub trait ModelTask {
    type Output;

    fn needs_oracle(&self) -> bool {
        false
    }

    fn run<D: Dynamics>(self, prepared: Prepared<D>) -> Result<Self::Output, CliError>;
}

fn bd_observable(obs: ObservableConfig) -> Box<dyn Fn(&BdState) -> f64 + Send + Sync> {
    match obs {
        ObservableConfig::State => Box::new(|x: &BdState| x.iter().map(|&c| f64::from(c)).sum()),
        ObservableConfig::One => Box::new(|_: &BdState| 1.0),
    }
}

fn bd_oracle(
    model: &BirthDeath,
    start: &BdState,
    f: &(dyn Fn(&BdState) -> f64 + Send + Sync),
    n0: usize,
    horizon: f64,
    truncated_at: Option<u32>,
) -> Result<OracleSummary, CliError> {
    let states = match model.enumerate() {
        Some(s) => s,
        None => reachable_states(model, std::slice::from_ref(start), &(), MAX_STATES)?,
    };
    let g = tilted_generator(model, &states, &())?;
    let triple = leading_triple(&g)?;
    let fv = g.vector(f);
    let qf = semigroup_apply(&g, &fv, horizon)?;
    let m0_qf = g.index_of(start).map_or(0.0, |i| n0 as f64 * qf[i]);
    Ok(OracleSummary {
        lambda: triple.lambda,
        nu_f: triple.nu_of(&fv),
        m0_qf,
        states: g.states().iter().map(|s| format!("{:?}", s.as_slice())).collect(),
        eta: triple.eta.iter().copied().collect(),
        nu: triple.nu.iter().copied().collect(),
        truncated_at,
    })
}

#[allow(clippy::too_many_arguments)]
fn bd_task<T: ModelTask>(
    model: BirthDeath,
    oracle_model: Option<BirthDeath>,
    truncated_at: Option<u32>,
    initial: &[u32],
    config: &ExperimentConfig,
    task: T,
) -> Result<T::Output, CliError> {
    let start = model.state(initial)?;
    let observable = bd_observable(config.run.observable);
    let oracle = if task.needs_oracle() {
        let om = oracle_model.as_ref().unwrap_or(&model);
        Some(bd_oracle(
            om,
            &start,
            &*observable,
            config.run.particles,
            config.run.horizon,
            truncated_at,
        )?)
    } else {
        None
    };
    task.run(Prepared {
        initial: SystemState::from_states(vec![start; config.run.particles]),
        dynamics: Jump::new(model),
        observable,
        oracle,
    })
}

fn brw_spec(c: &BrwConfig) -> BrwSpec {
    BrwSpec {
        n: c.n,
        p: c.p,
        s_on: c.s_on,
        s_off: c.s_off,
        rate_draw: c.rate_draw,
        kill: c.kill.clone(),
    }
}

fn unbounded(ok: bool) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(
            "the branching rate is unbounded without a state cap; pass --unbounded-ok to run anyway".into(),
        ))
    }
}

/// Builds the configured model and hands it to `task`.
pub fn dispatch<T: ModelTask>(config: &ExperimentConfig, unbounded_ok: bool, task: T) -> Result<T::Output, CliError> {
    let n0 = config.run.particles;
    let obs = config.run.observable;
    match &config.model {
        ModelConfig::Benchmark { cap, initial } => {
            let (oracle_model, truncated) = match cap {
                Some(_) => (None, None),
                None => {
                    unbounded(unbounded_ok)?;
                    let m = config.run.oracle_cap.max(*initial + 1);
                    (Some(benchmark(Some(m))?), Some(m))
                }
            };
            bd_task(benchmark(*cap)?, oracle_model, truncated, &[*initial], config, task)
        }
        ModelConfig::Killed { cap, initial } => {
            bd_task(bd_killed_make(Some(*cap))?, None, None, &[*initial], config, task)
        }
        ModelConfig::SingleState { rate } => {
            let r = *rate;
            let spec = BirthDeathSpec {
                dim: 1,
                birth: vec![std::sync::Arc::new(|_| 0.0)],
                death: vec![std::sync::Arc::new(|_| 0.0)],
                branch: std::sync::Arc::new(move |_| r.max(0.0)),
                kill: std::sync::Arc::new(move |_| (-r).max(0.0)),
                floor: 0,
                cap: None,
                boundary: Default::default(),
                absorbing: None,
                branch_bound: Some(r.max(0.0)),
            };
            bd_task(bd_make(spec)?, None, None, &[0], config, task)
        }
        ModelConfig::BirthDeath {
            dim,
            floor,
            cap,
            boundary,
            birth,
            death,
            branch,
            kill,
            initial,
        } => {
            let hi = cap.unwrap_or(*floor);
            let branch_bound = cap.map(|_| branch.max_over(*floor * *dim as u32, hi * *dim as u32).max(0.0));
            if cap.is_none() && !branch.pieces.is_empty() {
                unbounded(unbounded_ok)?;
            }
            let sum_fn = |p: bbmmi_core::models::PiecewisePoly| -> bbmmi_core::models::birth_death::RateFn {
                std::sync::Arc::new(move |x: &[u32]| p.eval(x.iter().sum()))
            };
            let spec = BirthDeathSpec {
                dim: *dim,
                birth: birth.iter().enumerate().map(|(i, p)| p.clone().rate_fn(i)).collect(),
                death: death.iter().enumerate().map(|(i, p)| p.clone().rate_fn(i)).collect(),
                branch: sum_fn(branch.clone()),
                kill: sum_fn(kill.clone()),
                floor: *floor,
                cap: *cap,
                boundary: *boundary,
                absorbing: None,
                branch_bound,
            };
            bd_task(bd_make(spec)?, None, None, initial, config, task)
        }
        ModelConfig::Brw(c) => {
            let model = brw_make(brw_spec(c))?;
            if c.initial_site > c.n {
                return Err(CliError::Config(format!(
                    "initial_site {} outside 0..={}",
                    c.initial_site, c.n
                )));
            }
            let x0 = BrwState {
                site: c.initial_site,
                regime: Regime::OFF,
            };
            let observable: Box<dyn Fn(&BrwState) -> f64 + Send + Sync> = match obs {
                ObservableConfig::State => Box::new(|x: &BrwState| f64::from(x.site)),
                ObservableConfig::One => Box::new(|_: &BrwState| 1.0),
            };
            task.run(Prepared {
                dynamics: Jump::new(model),
                initial: SystemState::from_states(vec![x0; n0]),
                observable,
                oracle: None,
            })
        }
        ModelConfig::BrwShared(c) => {
            let model = brw_shared_make(brw_spec(c))?;
            if c.initial_site > c.n {
                return Err(CliError::Config(format!(
                    "initial_site {} outside 0..={}",
                    c.initial_site, c.n
                )));
            }
            let observable: Box<dyn Fn(&u32) -> f64 + Send + Sync> = match obs {
                ObservableConfig::State => Box::new(|x: &u32| f64::from(*x)),
                ObservableConfig::One => Box::new(|_: &u32| 1.0),
            };
            task.run(Prepared {
                dynamics: Jump::new(model),
                initial: SystemState::new(vec![c.initial_site; n0], Regime::OFF),
                observable,
                oracle: None,
            })
        }
        ModelConfig::Nrw {
            length,
            velocities,
            alpha,
            regions,
            initial_position,
            initial_velocity,
        } => {
            let mut spec = NrwSlabSpec::uniform(*length, velocities.clone(), *alpha);
            if let Some(r) = regions {
                spec.regions = r.clone();
            }
            let model = nrw_make(spec)?;
            let x0 = model.state(*initial_position, *initial_velocity)?;
            let observable: Box<dyn Fn(&bbmmi_core::models::NrwState) -> f64 + Send + Sync> = match obs {
                ObservableConfig::State => Box::new(|x: &bbmmi_core::models::NrwState| x.position()),
                ObservableConfig::One => Box::new(|_: &bbmmi_core::models::NrwState| 1.0),
            };
            task.run(Prepared {
                dynamics: Flow::new(model),
                initial: SystemState::from_states(vec![x0; n0]),
                observable,
                oracle: None,
            })
        }
    }
}

fn engine_config(config: &ExperimentConfig) -> EngineConfig {
    EngineConfig {
        event_cap: config.run.event_cap,
        record_events: config.run.record_events,
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Other(e.to_string()))
}

/// Files written by `simulate`.
#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub snapshots: PathBuf,
    pub events: Option<PathBuf>,
    pub status: RunStatus,
    pub total_events: u64,
    pub wall: f64,
}

struct SimulateTask<'a> {
    config: &'a ExperimentConfig,
    out_dir: &'a Path,
    command: &'a str,
}

impl ModelTask for SimulateTask<'_> {
    type Output = SimulateOutput;

    fn run<D: Dynamics>(self, p: Prepared<D>) -> Result<SimulateOutput, CliError> {
        let c = self.config;
        let start = Instant::now();
        let grid = uniform_grid(c.run.horizon, c.run.dt);
        let spec = BatchSpec {
            seed: c.run.seed,
            role: "simulate",
            replicas: c.run.replicas,
            horizon: c.run.horizon,
            grid: &grid,
            config: engine_config(c),
        };
        let initial = &p.initial;
        let results = pool(c.run.workers)?
            .install(|| simulate_batch(&p.dynamics, &c.policy, |_| initial.clone(), &*p.observable, &spec));
        let wall = start.elapsed().as_secs_f64();
        log::info!("{} replicas simulated in {wall:.3} s", c.run.replicas);
        let mut status = RunStatus {
            replicas: c.run.replicas,
            ..Default::default()
        };
        let mut runs = Vec::with_capacity(results.len());
        for (r, res) in results.into_iter().enumerate() {
            match res {
                Ok(run) => {
                    if run.hardkill_ties > 0 {
                        status.ties.push((r as u64, run.hardkill_ties));
                    }
                    runs.push(run);
                }
                Err(e @ EngineError::ExplosionGuard { .. }) => status.tripped.push((r as u64, e.to_string())),
                Err(e) => return Err(e.into()),
            }
        }
        let header = output::header(self.command, &c.echo(), Some(&status));
        let (snap_path, mut out) = output::create(self.out_dir, "snapshots.csv", &header)?;
        write_snapshot_header(&mut out)?;
        let mut total_events = 0;
        for run in &runs {
            write_snapshots(&mut out, run.index, &run.snapshots)?;
            total_events += run.counters.total_steps();
        }
        out.flush()?;
        let events = if c.run.record_events {
            let (path, mut out) = output::create(self.out_dir, "events.ndjson", &header)?;
            for run in &runs {
                if let Some(ev) = &run.events {
                    write_events(&mut out, run.index, ev)?;
                }
            }
            out.flush()?;
            Some(path)
        } else {
            None
        };
        if let Some((r, msg)) = status.tripped.first() {
            return Err(CliError::Explosion(format!("replica {r}: {msg}")));
        }
        Ok(SimulateOutput {
            snapshots: snap_path,
            events,
            status,
            total_events,
            wall,
        })
    }
}

pub fn cmd_simulate(config: &ExperimentConfig, out_dir: &Path, unbounded_ok: bool) -> Result<SimulateOutput, CliError> {
    dispatch(
        config,
        unbounded_ok,
        SimulateTask {
            config,
            out_dir,
            command: "simulate",
        },
    )
}

/// Throughput of the configured simulation; nothing is written.
pub fn cmd_bench(config: &ExperimentConfig, unbounded_ok: bool) -> Result<String, CliError> {
    let dir = std::env::temp_dir().join(format!("bbmmi-bench-{}", std::process::id()));
    let out = dispatch(
        config,
        unbounded_ok,
        SimulateTask {
            config,
            out_dir: &dir,
            command: "bench",
        },
    );
    let _ = std::fs::remove_dir_all(&dir);
    let out = out?;
    Ok(format!(
        "replicas,events,seconds,events_per_second\n{},{},{:.3},{:.0}\n",
        config.run.replicas,
        out.total_events,
        out.wall,
        out.total_events as f64 / out.wall.max(1e-9)
    ))
}

struct OracleTask;

impl ModelTask for OracleTask {
    type Output = Option<OracleSummary>;

    fn needs_oracle(&self) -> bool {
        true
    }

    fn run<D: Dynamics>(self, p: Prepared<D>) -> Result<Option<OracleSummary>, CliError> {
        Ok(p.oracle)
    }
}

/// Leading eigentriple as CSV rows `quantity,state,value`.
pub fn cmd_oracle(config: &ExperimentConfig, out_dir: &Path, unbounded_ok: bool) -> Result<String, CliError> {
    let summary = dispatch(config, unbounded_ok, OracleTask)?.ok_or_else(|| {
        CliError::Config(format!(
            "no finite-state oracle for preset {}; its checks are property-based only",
            config.preset_name()
        ))
    })?;
    let mut rows = vec![
        vec!["lambda".into(), String::new(), num(summary.lambda)],
        vec!["nu_f".into(), String::new(), num(summary.nu_f)],
        vec!["m0_qf".into(), String::new(), num(summary.m0_qf)],
    ];
    for (s, v) in summary.states.iter().zip(&summary.eta) {
        rows.push(vec!["eta".into(), csv_state(s), num(*v)]);
    }
    for (s, v) in summary.states.iter().zip(&summary.nu) {
        rows.push(vec!["nu".into(), csv_state(s), num(*v)]);
    }
    let mut header = output::header("oracle", &config.echo(), None);
    if let Some(m) = summary.truncated_at {
        header.push_str(&format!("unbounded chain truncated at {m}\n"));
    }
    output::write_table(out_dir, "oracle.csv", &header, &["quantity", "state", "value"], &rows)?;
    let mut text = String::from("quantity,state,value\n");
    for r in rows {
        text.push_str(&r.join(","));
        text.push('\n');
    }
    Ok(text)
}

fn csv_state(s: &str) -> String {
    s.trim_matches(|c| c == '[' || c == ']').replace(", ", ";")
}

/// One estimator row of the `lambda` command.
#[derive(Debug, Clone, Serialize)]
pub struct LambdaRow {
    pub estimator: String,
    pub preset: String,
    pub parameters: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub seed: u64,
    pub events: u64,
    pub note: String,
    pub wall_seconds: f64,
}

struct LambdaTask<'a> {
    config: &'a ExperimentConfig,
}

impl ModelTask for LambdaTask<'_> {
    type Output = Vec<LambdaRow>;

    fn needs_oracle(&self) -> bool {
        true
    }

    fn run<D: Dynamics>(self, p: Prepared<D>) -> Result<Vec<LambdaRow>, CliError> {
        let c = self.config;
        let l = &c.lambda;
        let reps = c.run.replicas;
        let seed = c.run.seed;
        let preset = c.preset_name().to_string();
        let note = if p.oracle.is_some() {
            String::new()
        } else {
            "property-based only".to_string()
        };
        let engine = EngineConfig {
            record_events: false,
            ..engine_config(c)
        };
        let workers = pool(c.run.workers)?;

        let start = Instant::now();
        let grid = uniform_grid(l.single_horizon, l.window);
        let spec = BatchSpec {
            seed,
            role: "lambda-single",
            replicas: reps,
            horizon: l.single_horizon,
            grid: &grid,
            config: engine,
        };
        let initial = &p.initial;
        let runs = workers
            .install(|| simulate_batch(&p.dynamics, &c.policy, |_| initial.clone(), &*p.observable, &spec))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        let single_wall = start.elapsed().as_secs_f64();
        let single_events: u64 = runs.iter().map(|r| r.counters.events).sum();
        let hats = runs
            .iter()
            .map(|r| lambda_hat(&r.snapshots))
            .collect::<Result<Vec<_>, _>>()?;
        let bars = runs
            .iter()
            .map(|r| lambda_bar(&r.snapshots))
            .collect::<Result<Vec<_>, _>>()?;

        let start = Instant::now();
        let pf_config = PfConfig {
            horizon: l.pf_horizon,
            window: l.window,
            systems: l.pf_systems,
            ess_threshold: l.ess_threshold,
            engine,
        };
        let mut seeder = derive_stream(seed, 0, "lambda-pf-seeds");
        let pf_seeds: Vec<u64> = (0..reps).map(|_| seeder.next_u64()).collect();
        let mut pfs = Vec::with_capacity(reps as usize);
        let mut pf_events = 0;
        for s in pf_seeds {
            let r = workers.install(|| pf_lambda(&pf_config, &p.dynamics, &c.policy, &p.initial, s))?;
            pf_events += r.events;
            pfs.push(r.lambda);
        }
        let pf_wall = start.elapsed().as_secs_f64();

        let se = |v: &[f64]| (v.len() > 1).then(|| std_error(v));
        let single_params = format!("T={};dt={};replicas={reps}", l.single_horizon, l.window);
        let mut rows = vec![
            LambdaRow {
                estimator: "lambda_hat".into(),
                preset: preset.clone(),
                parameters: single_params.clone(),
                value: mean(&hats),
                stderr: se(&hats),
                seed,
                events: single_events,
                note: note.clone(),
                wall_seconds: single_wall,
            },
            LambdaRow {
                estimator: "lambda_bar".into(),
                preset: preset.clone(),
                parameters: single_params,
                value: mean(&bars),
                stderr: se(&bars),
                seed,
                events: single_events,
                note: note.clone(),
                wall_seconds: single_wall,
            },
            LambdaRow {
                estimator: "pf_lambda".into(),
                preset: preset.clone(),
                parameters: format!(
                    "T={};dt={};systems={};ess={};replicas={reps}",
                    l.pf_horizon, l.window, l.pf_systems, l.ess_threshold
                ),
                value: mean(&pfs),
                stderr: se(&pfs),
                seed,
                events: pf_events,
                note: note.clone(),
                wall_seconds: pf_wall,
            },
        ];
        if let Some(o) = &p.oracle {
            rows.push(LambdaRow {
                estimator: "oracle".into(),
                preset,
                parameters: o.truncated_at.map_or(String::new(), |m| format!("truncated={m}")),
                value: o.lambda,
                stderr: Some(0.0),
                seed,
                events: 0,
                note: String::new(),
                wall_seconds: 0.0,
            });
        }
        Ok(rows)
    }
}

/// Compares the growth-rate estimators, and the oracle when available.
/// Wall times go to the JSON summary only, so the CSV is reproducible.
pub fn cmd_lambda(config: &ExperimentConfig, out_dir: &Path, unbounded_ok: bool) -> Result<Vec<LambdaRow>, CliError> {
    let rows = dispatch(config, unbounded_ok, LambdaTask { config })?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.estimator.clone(),
                r.preset.clone(),
                r.parameters.clone(),
                num(r.value),
                r.stderr.map_or(String::new(), num),
                r.seed.to_string(),
                r.events.to_string(),
                r.note.clone(),
            ]
        })
        .collect();
    let header = output::header("lambda", &config.echo(), None);
    output::write_table(
        out_dir,
        "lambda.csv",
        &header,
        &[
            "estimator",
            "preset",
            "parameters",
            "value",
            "stderr",
            "seed",
            "events",
            "note",
        ],
        &table,
    )?;
    let summary = serde_json::json!({
        "version": output::VERSION,
        "command": "lambda",
        "config": config,
        "rows": rows,
    });
    std::fs::write(
        out_dir.join("lambda.json"),
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::Other(e.to_string()))?,
    )?;
    Ok(rows)
}

/// Settings of the `table` command.
#[derive(Debug, Clone, Serialize)]
pub struct TableOptions {
    /// 10 for the first table, 100 for the second.
    pub particles: usize,
    /// `None` stands for an unbounded state space.
    pub caps: Vec<Option<u32>>,
    pub replicas: u64,
    pub horizon: f64,
    pub dt: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub workers: usize,
    pub oracle_cap: u32,
    pub unbounded_ok: bool,
}

impl TableOptions {
    pub fn preset(name: &str) -> Result<Self, CliError> {
        let particles = match name {
            "table1" => 10,
            "table2" => 100,
            other => return Err(CliError::Config(format!("unknown table preset {other:?}"))),
        };
        Ok(Self {
            particles,
            caps: vec![Some(10), Some(100), Some(1000), None],
            replicas: 200,
            horizon: 200.0,
            dt: 0.1,
            burn_in: 0.2,
            seed: 1,
            workers: 1,
            oracle_cap: 200,
            unbounded_ok: false,
        })
    }
}

/// One row of a table: bias, spread and event rate, or a marker.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub cap: Option<u32>,
    pub algorithm: &'static str,
    pub metrics: Result<bbmmi_core::estimators::MetricReport, &'static str>,
    pub nu_f: Option<f64>,
}

fn cap_label(cap: Option<u32>) -> String {
    cap.map_or("inf".into(), |m| m.to_string())
}

/// Stationary metrics of the fixed-size and Fleming-Viot systems for each
/// state cap.
pub fn table_rows(opts: &TableOptions) -> Result<Vec<TableRow>, CliError> {
    let workers = pool(opts.workers)?;
    let mut rows = Vec::new();
    let grid = uniform_grid(opts.horizon, opts.dt);
    let n = opts.particles;
    for (k, &cap) in opts.caps.iter().enumerate() {
        let oracle_cap = cap.unwrap_or(opts.oracle_cap);
        let oracle_model = benchmark(Some(oracle_cap))?;
        let g = tilted_generator(&oracle_model, &oracle_model.enumerate().unwrap_or_default(), &())?;
        let nu_f = leading_triple(&g)?.nu_of(&g.vector(&|x: &BdState| f64::from(x[0])));
        for (algorithm, fv) in [("nmin-nmax", false), ("fv", true)] {
            if fv && cap.is_none() {
                rows.push(TableRow {
                    cap,
                    algorithm,
                    metrics: Err("*"),
                    nu_f: None,
                });
                continue;
            }
            if !fv && cap.is_none() && !opts.unbounded_ok {
                rows.push(TableRow {
                    cap,
                    algorithm,
                    metrics: Err("skipped"),
                    nu_f: Some(nu_f),
                });
                continue;
            }
            let model = if fv { bd_killed_make(cap)? } else { benchmark(cap)? };
            let policy = if fv {
                Policy::Moran
            } else {
                Policy::fixed_size(n).map_err(|e| CliError::Config(e.to_string()))?
            };
            let x0 = model.state(&[1])?;
            let initial = SystemState::from_states(vec![x0; n]);
            let role = format!("table-{}-{k}", algorithm);
            let spec = BatchSpec {
                seed: opts.seed,
                role: &role,
                replicas: opts.replicas,
                horizon: opts.horizon,
                grid: &grid,
                config: EngineConfig::default(),
            };
            let dynamics = Jump::new(model);
            let f = |x: &BdState| f64::from(x[0]);
            let runs = workers
                .install(|| simulate_batch(&dynamics, &policy, |_| initial.clone(), &f, &spec))
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?;
            let batch = ReplicaBatch::from_runs(opts.seed, runs)?;
            log::info!("table row M = {} {algorithm} done", cap_label(cap));
            rows.push(TableRow {
                cap,
                algorithm,
                metrics: Ok(stationary_metrics(&batch, nu_f, opts.burn_in)?),
                nu_f: Some(nu_f),
            });
        }
    }
    Ok(rows)
}

pub const TABLE_COLUMNS: [&str; 10] = [
    "M",
    "algorithm",
    "N",
    "bias",
    "std",
    "event_rate",
    "bias_radius",
    "rate_radius",
    "nu_f",
    "replicas",
];

pub fn cmd_table(name: &str, opts: &TableOptions, out_dir: &Path) -> Result<PathBuf, CliError> {
    let rows = table_rows(opts)?;
    let n = opts.particles.to_string();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![cap_label(r.cap), r.algorithm.to_string(), n.clone()];
            match &r.metrics {
                Ok(m) => row.extend([
                    num(m.bias),
                    num(m.std),
                    num(m.event_rate),
                    num(m.bias_radius),
                    num(m.rate_radius),
                ]),
                Err(marker) => row.extend(std::iter::repeat_n(marker.to_string(), 5)),
            }
            row.push(r.nu_f.map_or("*".into(), num));
            row.push(opts.replicas.to_string());
            row
        })
        .collect();
    let echo = toml::to_string(opts).unwrap_or_default();
    let header = output::header(&format!("table {name}"), &echo, None);
    output::write_table(out_dir, &format!("{name}.csv"), &header, &TABLE_COLUMNS, &body)
}
