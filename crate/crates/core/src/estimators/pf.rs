//! Particle filter over whole particle systems for the growth rate.

use rayon::prelude::*;

use super::EstimatorError;
use crate::engine::{Dynamics, EngineConfig, InteractionPolicy, Simulator, SystemState};
use crate::rng::{derive_stream, uniform, RngStream};

pub const PF_RESAMPLE_ROLE: &str = "pf-resample";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfConfig {
    pub horizon: f64,
    pub window: f64,
    /// Number of particle systems.
    pub systems: usize,
    /// Resample when `ESS / systems <= threshold`; 1 always resamples,
    /// 0 never does.
    pub ess_threshold: f64,
    pub engine: EngineConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfResult {
    pub lambda: f64,
    pub log_w: f64,
    pub windows: usize,
    pub resamplings: usize,
    /// Effective sample size after each window.
    pub ess: Vec<f64>,
    /// Interaction events simulated, all systems and windows.
    pub events: u64,
}

/// Stream driving system `slot` during window `window`.
pub fn pf_window_stream(seed: u64, window: usize, slot: usize) -> RngStream {
    derive_stream(seed, slot as u64, &format!("pf-window-{window}"))
}

/// Window boundaries `t_0 = 0 < t_1 < ... = horizon`, the last one possibly
/// partial.
pub fn pf_windows(horizon: f64, window: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut k = 1u64;
    loop {
        let t = k as f64 * window;
        if t >= horizon * (1.0 - 1e-12) {
            out.push(horizon);
            return out;
        }
        out.push(t);
        k += 1;
    }
}

/// Runs `systems` copies of `initial` through windows of length `window`,
/// multiplies `W` by the weighted mean window weight and resamples whole
/// systems multinomially. Returns `log(W) / horizon`.
pub fn pf_lambda<D, P>(
    config: &PfConfig,
    dynamics: &D,
    policy: &P,
    initial: &SystemState<D::State, D::Env>,
    seed: u64,
) -> Result<PfResult, EstimatorError>
where
    D: Dynamics,
    P: InteractionPolicy<D::State> + ?Sized,
{
    if config.systems == 0 {
        return Err(EstimatorError::InvalidConfig("at least one system is required".into()));
    }
    if !(config.window > 0.0) || !(config.horizon > 0.0) || !config.horizon.is_finite() {
        return Err(EstimatorError::InvalidConfig(
            "window and horizon must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&config.ess_threshold) {
        return Err(EstimatorError::InvalidConfig("ESS threshold must lie in [0, 1]".into()));
    }
    if initial.is_empty() {
        return Err(EstimatorError::EmptySystem { time: initial.time() });
    }
    let n = config.systems;
    let times = pf_windows(config.horizon, config.window);
    let mut systems: Vec<SystemState<D::State, D::Env>> = vec![initial.clone(); n];
    let mut carried = vec![1.0 / n as f64; n];
    let mut resample_rng = derive_stream(seed, 0, PF_RESAMPLE_ROLE);
    let mut log_w = 0.0;
    let mut result = PfResult {
        lambda: 0.0,
        log_w: 0.0,
        windows: times.len() - 1,
        resamplings: 0,
        ess: Vec::with_capacity(times.len() - 1),
        events: 0,
    };
    for (window, span) in times.windows(2).enumerate() {
        let t_end = span[1];
        let outcomes = systems
            .into_par_iter()
            .enumerate()
            .map(|(slot, sys)| {
                let before = (sys.log_weight(), sys.len(), sys.counters().events);
                let mut rng = pf_window_stream(seed, window, slot);
                let mut sim = Simulator::new(dynamics, policy, sys, config.engine);
                sim.advance_to(t_end, &mut rng)?;
                let (sys, _) = sim.into_parts();
                let weight = if sys.is_empty() || before.1 == 0 {
                    0.0
                } else {
                    (sys.log_weight() - before.0 + (sys.len() as f64 / before.1 as f64).ln()).exp()
                };
                let events = sys.counters().events - before.2;
                Ok((sys, weight, events))
            })
            .collect::<Result<Vec<_>, crate::engine::EngineError>>()?;
        let mut weights = Vec::with_capacity(n);
        systems = Vec::with_capacity(n);
        for (sys, w, events) in outcomes {
            systems.push(sys);
            weights.push(w);
            result.events += events;
        }
        let weighted: Vec<f64> = carried.iter().zip(&weights).map(|(c, w)| c * w).collect();
        let total = crate::stats::pairwise_sum(&weighted);
        if !(total > 0.0) {
            return Err(EstimatorError::AllWeightsZero { window });
        }
        log_w += total.ln();
        carried = weighted.iter().map(|w| w / total).collect();
        let ess = 1.0 / carried.iter().map(|c| c * c).sum::<f64>();
        result.ess.push(ess);
        let last = window + 2 == times.len();
        if !last && ess / n as f64 <= config.ess_threshold {
            systems = multinomial(&systems, &carried, &mut resample_rng);
            carried = vec![1.0 / n as f64; n];
            result.resamplings += 1;
        }
    }
    result.log_w = log_w;
    result.lambda = log_w / config.horizon;
    Ok(result)
}

/// `out.len() == probs.len()` independent draws from `probs`, by inversion
/// of sorted uniforms.
fn multinomial<T: Clone>(items: &[T], probs: &[f64], rng: &mut RngStream) -> Vec<T> {
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p;
        cdf.push(acc);
    }
    (0..items.len())
        .map(|_| {
            let u = uniform(rng) * acc;
            let k = cdf.partition_point(|c| *c <= u).min(items.len() - 1);
            items[k].clone()
        })
        .collect()
}
