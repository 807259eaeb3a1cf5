//! Estimators built on replica snapshots.

mod pf;

use rayon::prelude::*;
use thiserror::Error;

pub use pf::{pf_lambda, pf_window_stream, PfConfig, PfResult, PF_RESAMPLE_ROLE};

use crate::engine::{run, Counters, Dynamics, EngineConfig, EngineError, InteractionPolicy, Snapshot, SystemState};
use crate::rng::derive_stream;
use crate::stats::{log_mean_exp, mean, pairwise_sum, std_error, variance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("time {0} is not on the snapshot grid")]
    GridTime(f64),
    #[error("snapshot grids differ between replicas")]
    GridMismatch,
    #[error("grid must be equally spaced with at least two points")]
    InvalidGrid,
    #[error("batch has no replicas")]
    EmptyBatch,
    #[error("system is empty at t = {time}")]
    EmptySystem { time: f64 },
    #[error("every system emptied in window {window}")]
    AllWeightsZero { window: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Which recorded observable to read from a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    /// The simulation's test function `f`.
    F,
    /// The constant function 1 (the population size).
    One,
}

impl Observable {
    fn read(self, s: &Snapshot) -> f64 {
        match self {
            Observable::F => s.occ_f,
            Observable::One => s.occ_1,
        }
    }
}

/// Output of one simulated replica.
#[derive(Debug, Clone)]
pub struct ReplicaRun {
    pub index: u64,
    pub snapshots: Vec<Snapshot>,
    pub events: Option<Vec<crate::engine::EventRecord>>,
    pub counters: Counters,
    pub hardkill_ties: u64,
    pub max_particles: usize,
}

/// Replica `r` uses stream `(seed, r, role)`.
pub struct BatchSpec<'a> {
    pub seed: u64,
    pub role: &'a str,
    pub replicas: u64,
    pub horizon: f64,
    pub grid: &'a [f64],
    pub config: EngineConfig,
}

/// Simulates replicas in parallel on the current rayon pool. Results are in
/// replica order and do not depend on scheduling.
pub fn simulate_batch<D, P, F, I>(
    dynamics: &D,
    policy: &P,
    initial: I,
    f: &F,
    spec: &BatchSpec<'_>,
) -> Vec<Result<ReplicaRun, EngineError>>
where
    D: Dynamics,
    P: InteractionPolicy<D::State> + ?Sized,
    F: Fn(&D::State) -> f64 + Sync + ?Sized,
    I: Fn(u64) -> SystemState<D::State, D::Env> + Sync,
{
    (0..spec.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = derive_stream(spec.seed, r, spec.role);
            let traj = run(
                dynamics,
                policy,
                initial(r),
                spec.horizon,
                spec.grid,
                f,
                spec.config,
                &mut rng,
            )?;
            Ok(ReplicaRun {
                index: r,
                counters: *traj.final_state.counters(),
                hardkill_ties: traj.final_state.hardkill_ties(),
                max_particles: traj.final_state.max_particles_seen(),
                snapshots: traj.snapshots,
                events: traj.events,
            })
        })
        .collect()
}

/// Snapshots of several replicas on a common grid.
#[derive(Debug, Clone)]
pub struct ReplicaBatch {
    pub seed: u64,
    grid: Vec<f64>,
    replicas: Vec<Vec<Snapshot>>,
}

impl ReplicaBatch {
    pub fn new(seed: u64, replicas: Vec<Vec<Snapshot>>) -> Result<Self, EstimatorError> {
        let first = replicas.first().ok_or(EstimatorError::EmptyBatch)?;
        let grid: Vec<f64> = first.iter().map(|s| s.time).collect();
        for r in &replicas {
            if r.len() != grid.len() || r.iter().zip(&grid).any(|(s, t)| s.time != *t) {
                return Err(EstimatorError::GridMismatch);
            }
        }
        Ok(Self { seed, grid, replicas })
    }

    pub fn from_runs(seed: u64, runs: Vec<ReplicaRun>) -> Result<Self, EstimatorError> {
        Self::new(seed, runs.into_iter().map(|r| r.snapshots).collect())
    }

    pub fn len(&self) -> usize {
        self.replicas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicas.is_empty()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn replicas(&self) -> &[Vec<Snapshot>] {
        &self.replicas
    }

    /// Index of `t` in the grid, allowing for rounding.
    pub fn grid_index(&self, t: f64) -> Result<usize, EstimatorError> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.grid
            .iter()
            .position(|g| (g - t).abs() <= tol)
            .ok_or(EstimatorError::GridTime(t))
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Replica mean of `Pi^A_t Pi^B_t m_t(f)`, an unbiased estimate of
/// `m_0 Q_t f`. Emptied replicas contribute 0.
pub fn many_to_one(batch: &ReplicaBatch, obs: Observable, t: f64) -> Result<Estimate, EstimatorError> {
    let k = batch.grid_index(t)?;
    let values: Vec<f64> = batch
        .replicas
        .iter()
        .map(|r| {
            let s = &r[k];
            if s.is_empty() {
                0.0
            } else {
                s.log_weight().exp() * obs.read(s)
            }
        })
        .collect();
    Ok(Estimate {
        value: mean(&values),
        std_error: std_error(&values),
    })
}

/// `m_t(f) / m_t(1)`, or `None` for an empty system.
pub fn normalized(s: &Snapshot) -> Option<f64> {
    (s.occ_1 > 0.0).then(|| s.occ_f / s.occ_1)
}

fn log_mass(s: &Snapshot) -> Result<f64, EstimatorError> {
    if s.occ_1 > 0.0 {
        Ok(s.occ_1.ln())
    } else {
        Err(EstimatorError::EmptySystem { time: s.time })
    }
}

/// `(log Pi^A_T Pi^B_T + log(m_T 1 / m_0 1)) / T` over the span of the
/// snapshots.
pub fn lambda_hat(snapshots: &[Snapshot]) -> Result<f64, EstimatorError> {
    let (first, last) = match snapshots {
        [first, .., last] => (first, last),
        _ => return Err(EstimatorError::InvalidGrid),
    };
    let span = last.time - first.time;
    if !(span > 0.0) {
        return Err(EstimatorError::InvalidGrid);
    }
    let log_growth = last.log_weight() - first.log_weight() + log_mass(last)? - log_mass(first)?;
    Ok(log_growth / span)
}

/// `(1/dt) log mean_i (Pi_{t_{i+1}} / Pi_{t_i})` over consecutive snapshots,
/// which must be equally spaced.
pub fn lambda_bar(snapshots: &[Snapshot]) -> Result<f64, EstimatorError> {
    if snapshots.len() < 2 {
        return Err(EstimatorError::InvalidGrid);
    }
    let dt = snapshots[1].time - snapshots[0].time;
    if !(dt > 0.0) {
        return Err(EstimatorError::InvalidGrid);
    }
    if snapshots
        .windows(2)
        .any(|w| ((w[1].time - w[0].time) - dt).abs() > 1e-9 * dt.max(1.0))
    {
        return Err(EstimatorError::InvalidGrid);
    }
    if let Some(s) = snapshots.iter().find(|s| s.is_empty()) {
        return Err(EstimatorError::EmptySystem { time: s.time });
    }
    let ratios: Vec<f64> = snapshots
        .windows(2)
        .map(|w| w[1].log_weight() - w[0].log_weight())
        .collect();
    Ok(log_mean_exp(&ratios) / dt)
}

/// Keeps every `step`-th snapshot, starting with the first.
pub fn coarsen(snapshots: &[Snapshot], step: usize) -> Vec<Snapshot> {
    snapshots.iter().step_by(step.max(1)).copied().collect()
}

/// Stationary-regime summary of a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    /// `|mean of replica time averages - nu(f)|`.
    pub bias: f64,
    /// Spread of `m_t(f)/m_t(1)` over all post-burn-in snapshots.
    pub std: f64,
    /// `(A + B)` increments per unit time after burn-in.
    pub event_rate: f64,
    pub replicas: usize,
    /// 99% radius of the bias from replica-level variation.
    pub bias_radius: f64,
    /// 99% radius of the event rate from replica-level variation.
    pub rate_radius: f64,
}

pub const DEFAULT_BURN_IN: f64 = 0.2;
const Z99: f64 = 2.575_829_303_548_901;

/// Bias, spread and interaction rate after discarding the first
/// `burn_in` fraction of the horizon.
pub fn stationary_metrics(batch: &ReplicaBatch, nu_f: f64, burn_in: f64) -> Result<MetricReport, EstimatorError> {
    if !(0.0..1.0).contains(&burn_in) {
        return Err(EstimatorError::InvalidConfig(format!("burn-in fraction {burn_in}")));
    }
    let grid = batch.grid();
    let (&t0, &horizon) = match (grid.first(), grid.last()) {
        (Some(a), Some(b)) if b > a => (a, b),
        _ => return Err(EstimatorError::InvalidGrid),
    };
    let cut = t0 + burn_in * (horizon - t0);
    let start = grid.iter().position(|&t| t >= cut - 1e-12).unwrap_or(0);
    let span = horizon - grid[start];
    if !(span > 0.0) {
        return Err(EstimatorError::InvalidGrid);
    }
    let mut averages = Vec::with_capacity(batch.len());
    let mut rates = Vec::with_capacity(batch.len());
    let mut pooled = Vec::new();
    for r in batch.replicas() {
        let values: Vec<f64> = r[start..].iter().filter_map(normalized).collect();
        if !values.is_empty() {
            averages.push(mean(&values));
        }
        pooled.extend_from_slice(&values);
        let interactions = |s: &Snapshot| (s.resamples + s.selections) as f64;
        rates.push((interactions(&r[r.len() - 1]) - interactions(&r[start])) / span);
    }
    if averages.is_empty() {
        return Err(EstimatorError::EmptySystem { time: horizon });
    }
    let pooled_mean = pairwise_sum(&pooled) / pooled.len() as f64;
    let dev: Vec<f64> = pooled.iter().map(|v| (v - pooled_mean) * (v - pooled_mean)).collect();
    let std = if pooled.len() > 1 {
        (pairwise_sum(&dev) / (pooled.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(MetricReport {
        bias: (mean(&averages) - nu_f).abs(),
        std,
        event_rate: mean(&rates),
        replicas: batch.len(),
        bias_radius: Z99 * std_error(&averages),
        rate_radius: Z99 * std_error(&rates),
    })
}

/// Root-mean-square error of `m_t(f)/m_t(1)` against `target` over the
/// nonempty replicas at time `t`.
pub fn normalized_rmse(batch: &ReplicaBatch, t: f64, target: f64) -> Result<f64, EstimatorError> {
    let k = batch.grid_index(t)?;
    let sq: Vec<f64> = batch
        .replicas()
        .iter()
        .filter_map(|r| normalized(&r[k]))
        .map(|v| (v - target) * (v - target))
        .collect();
    if sq.is_empty() {
        return Err(EstimatorError::EmptySystem { time: t });
    }
    Ok(mean(&sq).sqrt())
}

/// Replica mean and standard error of `lambda_bar`.
pub fn lambda_bar_batch(batch: &ReplicaBatch) -> Result<Estimate, EstimatorError> {
    let values = batch
        .replicas()
        .iter()
        .map(|r| lambda_bar(r))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Estimate {
        value: mean(&values),
        std_error: (variance(&values) / values.len() as f64).sqrt(),
    })
}
