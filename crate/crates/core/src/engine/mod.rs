//! The interacting particle system: event loop, interactions and weights.
//!
//! Between events particles move as independent copies of the underlying
//! process. At a killing the killed particle is, with probability `p`,
//! replaced by a copy of a uniformly chosen survivor (resampling, weight
//! factor `(n-1)/n`). At a branching the newborn is, with probability `q`,
//! compensated by removing one of the `n+1` particles uniformly, newborn
//! included (selection, weight factor `(n+1)/n`). Weights are tracked in log
//! space.
//!
//! Clocks are redrawn after every event; for the exact jump class this is
//! equivalent in law to keeping them.

mod dynamics;
pub mod io;
mod policy;
mod state;
mod sumtree;

use rand::Rng;
use thiserror::Error;

pub use dynamics::{ConfigRates, Dynamics, Flow, Jump, JumpCache, Occurrence, BALANCE_TOLERANCE, MIN_ACCEPTANCE};
pub use policy::{FnPolicy, Interaction, InteractionPolicy, Policy, PolicyError};
pub use state::{
    resample_log_factor, select_log_factor, Counters, EventKind, EventRecord, Particle, Snapshot, SystemState,
    Trajectory,
};

use crate::rng::uniform;

pub const DEFAULT_EVENT_CAP: u64 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("explosion guard tripped after {events} events at t = {time}")]
    ExplosionGuard { events: u64, time: f64 },
    #[error("resampling requested with a single particle at t = {time}")]
    ResampleAtSizeOne { time: f64 },
    #[error("policy returned probability {value} outside [0, 1]")]
    InvalidProbability { value: f64 },
    #[error("particle {id} has invalid rate {rate}")]
    InvalidRate { id: u64, rate: f64 },
    #[error("balance condition violated for particle {id}: b - kappa = {got}, expected {expected}")]
    BalanceViolation { id: u64, expected: f64, got: f64 },
    #[error("thinning bound {bound} below event rate {rate}")]
    RateBoundViolated { rate: f64, bound: f64 },
    #[error("no particle with id {0}")]
    UnknownParticle(u64),
    #[error("grid must be sorted, start at or after the current time and end by the horizon")]
    InvalidGrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    /// Maximum number of simulated events (jumps included) per trajectory.
    pub event_cap: u64,
    pub record_events: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            event_cap: DEFAULT_EVENT_CAP,
            record_events: false,
        }
    }
}

/// One replica of the particle system.
pub struct Simulator<'a, D: Dynamics, P: ?Sized> {
    dynamics: &'a D,
    policy: &'a P,
    config: EngineConfig,
    cache: D::Cache,
    state: SystemState<D::State, D::Env>,
    events: Option<Vec<EventRecord>>,
}

impl<'a, D, P> Simulator<'a, D, P>
where
    D: Dynamics,
    P: InteractionPolicy<D::State> + ?Sized,
{
    pub fn new(dynamics: &'a D, policy: &'a P, state: SystemState<D::State, D::Env>, config: EngineConfig) -> Self {
        let mut state = state;
        state.all_dirty = true;
        Self {
            dynamics,
            policy,
            config,
            cache: dynamics.new_cache(),
            state,
            events: config.record_events.then(Vec::new),
        }
    }

    pub fn state(&self) -> &SystemState<D::State, D::Env> {
        &self.state
    }

    pub fn into_parts(self) -> (SystemState<D::State, D::Env>, Option<Vec<EventRecord>>) {
        (self.state, self.events)
    }

    pub fn events(&self) -> Option<&[EventRecord]> {
        self.events.as_deref()
    }

    /// Applies the next event if it happens no later than `until`; otherwise
    /// advances the clock to `until` and returns `None`.
    pub fn step<R: Rng + ?Sized>(&mut self, until: f64, rng: &mut R) -> Result<Option<EventRecord>, EngineError> {
        let steps = self.state.counters().total_steps();
        if steps >= self.config.event_cap {
            return Err(EngineError::ExplosionGuard {
                events: steps,
                time: self.state.time(),
            });
        }
        let Some(occurrence) = self.dynamics.next_event(&mut self.cache, &mut self.state, until, rng)? else {
            return Ok(None);
        };
        let record = self.apply(occurrence, rng)?;
        if let Some(log) = &mut self.events {
            log.push(record.clone());
        }
        Ok(Some(record))
    }

    /// Runs events up to and including time `t`.
    pub fn advance_to<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) -> Result<(), EngineError> {
        while self.step(t, rng)?.is_some() {}
        Ok(())
    }

    fn probability(value: f64) -> Result<f64, EngineError> {
        if (0.0..=1.0).contains(&value) {
            Ok(value)
        } else {
            Err(EngineError::InvalidProbability { value })
        }
    }

    fn coin<R: Rng + ?Sized>(prob: f64, rng: &mut R) -> bool {
        if prob >= 1.0 {
            true
        } else if prob <= 0.0 {
            false
        } else {
            uniform(rng) < prob
        }
    }

    fn apply<R: Rng + ?Sized>(
        &mut self,
        occurrence: Occurrence<D::State>,
        rng: &mut R,
    ) -> Result<EventRecord, EngineError> {
        let time = self.state.time();
        let size_before = self.state.len();
        let record = |kind, actor, partner, size_after| EventRecord {
            time,
            kind,
            actor,
            partner,
            size_before,
            size_after,
        };
        match occurrence {
            Occurrence::Environment => {
                self.state.counters_mut().env_switches += 1;
                Ok(record(EventKind::Environment, 0, None, size_before))
            }
            Occurrence::Motion { slot, state } => {
                let actor = self.state.particles()[slot].id;
                self.state.set_state(slot, state);
                self.state.counters_mut().motion_jumps += 1;
                Ok(record(EventKind::Motion, actor, None, size_before))
            }
            Occurrence::Branch { slot } => {
                let actor = self.state.particles()[slot].id;
                let ctx = Interaction {
                    particles: self.state.particles(),
                    actor: slot,
                    time,
                };
                let q = Self::probability(self.policy.select_probability(&ctx))?;
                {
                    let c = self.state.counters_mut();
                    c.branches += 1;
                    c.events += 1;
                }
                if Self::coin(q, rng) {
                    let removed = self.state.select_slot(slot, rng);
                    Ok(record(EventKind::Select, actor, Some(removed), self.state.len()))
                } else {
                    self.state.branch_slot(slot);
                    Ok(record(EventKind::Branch, actor, None, self.state.len()))
                }
            }
            Occurrence::SoftKill { slot } => self.kill(slot, false, rng),
            Occurrence::HardKill { slot, state } => {
                self.state.set_state(slot, state);
                self.kill(slot, true, rng)
            }
        }
    }

    fn kill<R: Rng + ?Sized>(&mut self, slot: usize, hard: bool, rng: &mut R) -> Result<EventRecord, EngineError> {
        let time = self.state.time();
        let size_before = self.state.len();
        let actor = self.state.particles()[slot].id;
        let ctx = Interaction {
            particles: self.state.particles(),
            actor: slot,
            time,
        };
        let p = Self::probability(self.policy.resample_probability(&ctx))?;
        if size_before == 1 && p > 0.0 {
            return Err(EngineError::ResampleAtSizeOne { time });
        }
        {
            let c = self.state.counters_mut();
            c.kills += 1;
            c.events += 1;
            if hard {
                c.hard_kills += 1;
            }
        }
        let (kind, partner) = if Self::coin(p, rng) {
            let partner = self.state.resample_slot(slot, rng)?;
            (EventKind::Resample, Some(partner))
        } else {
            self.state.kill_slot(slot);
            (if hard { EventKind::Hardkill } else { EventKind::Softkill }, None)
        };
        Ok(EventRecord {
            time,
            kind,
            actor,
            partner,
            size_before,
            size_after: self.state.len(),
        })
    }
}

/// Simulates one replica up to `horizon`, recording a [`Snapshot`] of the
/// observable `f` at each grid time. An emptied system keeps its weights and
/// records zero occupation from then on.
pub fn run<D, P, F, R>(
    dynamics: &D,
    policy: &P,
    initial: SystemState<D::State, D::Env>,
    horizon: f64,
    grid: &[f64],
    f: &F,
    config: EngineConfig,
    rng: &mut R,
) -> Result<Trajectory<D::State, D::Env>, EngineError>
where
    D: Dynamics,
    P: InteractionPolicy<D::State> + ?Sized,
    F: Fn(&D::State) -> f64 + ?Sized,
    R: Rng + ?Sized,
{
    let start = initial.time();
    if !(horizon >= start)
        || grid.windows(2).any(|w| !(w[0] <= w[1]))
        || grid.first().is_some_and(|&g| g < start)
        || grid.last().is_some_and(|&g| g > horizon)
    {
        return Err(EngineError::InvalidGrid);
    }
    let mut sim = Simulator::new(dynamics, policy, initial, config);
    let mut snapshots = Vec::with_capacity(grid.len());
    for &t in grid {
        sim.advance_to(t, rng)?;
        snapshots.push(Snapshot::of(sim.state(), f));
    }
    if sim.state().time() < horizon {
        sim.advance_to(horizon, rng)?;
    }
    let (final_state, events) = sim.into_parts();
    Ok(Trajectory {
        snapshots,
        events,
        final_state,
    })
}

/// Evenly spaced grid `0, dt, 2dt, ...` up to and including `horizon`.
pub fn uniform_grid(horizon: f64, dt: f64) -> Vec<f64> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return vec![0.0];
    }
    let n = (horizon / dt + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| (i as f64 * dt).min(horizon)).collect();
    if horizon - grid[n] > 1e-12 * horizon.max(1.0) {
        grid.push(horizon);
    } else {
        grid[n] = horizon;
    }
    grid
}
