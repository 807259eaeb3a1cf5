//! Next-event samplers for the two supported model classes.

use rand::Rng;

use super::state::{Particle, SystemState};
use super::sumtree::SumTree;
use super::EngineError;
use crate::clock::{exp_clock_invert, RateSegment};
use crate::model::{FlowEvent, FlowModel, JumpModel, ParticleState};
use crate::rng::{exp1, uniform};

/// The next thing that happens to the system.
#[derive(Debug, Clone, PartialEq)]
pub enum Occurrence<S> {
    Motion {
        slot: usize,
        state: S,
    },
    Branch {
        slot: usize,
    },
    SoftKill {
        slot: usize,
    },
    /// `state` is the particle's state on the boundary.
    HardKill {
        slot: usize,
        state: S,
    },
    Environment,
}

/// Samples system events for one replica.
///
/// On `Some`, the system clock is set to the event time and every particle
/// not involved in the event has been moved to that time. On `None` no event
/// occurs before `until` and the system has been advanced to `until`.
pub trait Dynamics: Sync {
    type State: ParticleState;
    type Env: ParticleState;
    type Cache: Send;

    fn new_cache(&self) -> Self::Cache;

    fn next_event<R: Rng + ?Sized>(
        &self,
        cache: &mut Self::Cache,
        sys: &mut SystemState<Self::State, Self::Env>,
        until: f64,
        rng: &mut R,
    ) -> Result<Option<Occurrence<Self::State>>, EngineError>;

    fn branch_bound(&self) -> Option<f64>;
}

/// Per-particle branching and killing rates that may depend on the whole
/// configuration. They must satisfy the balance condition
/// `b_i - kappa_i = b(x_i) - kappa(x_i)`, which the engine checks at every
/// evaluation.
pub trait ConfigRates<S>: Send + Sync {
    fn rates(&self, particles: &[Particle<S>], slot: usize, branch: f64, kill: f64) -> (f64, f64);
}

pub const BALANCE_TOLERANCE: f64 = 1e-9;

/// Exact sampler for [`JumpModel`]s.
pub struct Jump<M: JumpModel> {
    pub model: M,
    config_rates: Option<Box<dyn ConfigRates<M::State>>>,
}

impl<M: JumpModel> Jump<M> {
    pub fn new(model: M) -> Self {
        Self {
            model,
            config_rates: None,
        }
    }

    pub fn with_config_rates(model: M, rates: Box<dyn ConfigRates<M::State>>) -> Self {
        Self {
            model,
            config_rates: Some(rates),
        }
    }
}

pub struct JumpCache {
    tree: SumTree,
    rates: Vec<[f64; 3]>,
}

impl<M: JumpModel> Jump<M> {
    fn slot_rates(&self, sys: &SystemState<M::State, M::Env>, slot: usize) -> Result<[f64; 3], EngineError> {
        let x = &sys.particles()[slot].state;
        let env = sys.env();
        let motion = self.model.motion_rate(x, env);
        let mut branch = self.model.branch_rate(x, env);
        let mut kill = self.model.kill_rate(x, env);
        if let Some(cr) = &self.config_rates {
            let (b, k) = cr.rates(sys.particles(), slot, branch, kill);
            let expected = branch - kill;
            if ((b - k) - expected).abs() > BALANCE_TOLERANCE * expected.abs().max(1.0) {
                return Err(EngineError::BalanceViolation {
                    id: sys.particles()[slot].id,
                    expected,
                    got: b - k,
                });
            }
            branch = b;
            kill = k;
        }
        for rate in [motion, branch, kill] {
            if !(rate >= 0.0) || !rate.is_finite() {
                return Err(EngineError::InvalidRate {
                    id: sys.particles()[slot].id,
                    rate,
                });
            }
        }
        Ok([motion, branch, kill])
    }

    fn sync(&self, cache: &mut JumpCache, sys: &mut SystemState<M::State, M::Env>) -> Result<(), EngineError> {
        let n = sys.len();
        cache.tree.resize(n);
        cache.rates.resize(n, [0.0; 3]);
        if sys.all_dirty || self.config_rates.is_some() {
            for slot in 0..n {
                let r = self.slot_rates(sys, slot)?;
                cache.rates[slot] = r;
                cache.tree.set(slot, r[0] + r[1] + r[2]);
            }
        } else {
            for &slot in &sys.touched {
                if slot < n {
                    let r = self.slot_rates(sys, slot)?;
                    cache.rates[slot] = r;
                    cache.tree.set(slot, r[0] + r[1] + r[2]);
                }
            }
        }
        sys.touched.clear();
        sys.all_dirty = false;
        Ok(())
    }
}

impl<M: JumpModel> Dynamics for Jump<M> {
    type State = M::State;
    type Env = M::Env;
    type Cache = JumpCache;

    fn new_cache(&self) -> JumpCache {
        JumpCache {
            tree: SumTree::new(),
            rates: Vec::new(),
        }
    }

    fn next_event<R: Rng + ?Sized>(
        &self,
        cache: &mut JumpCache,
        sys: &mut SystemState<M::State, M::Env>,
        until: f64,
        rng: &mut R,
    ) -> Result<Option<Occurrence<M::State>>, EngineError> {
        self.sync(cache, sys)?;
        let env_rate = self.model.env_rate(sys.env());
        let particle_total = cache.tree.total();
        let total = particle_total + env_rate;
        let wait = exp_clock_invert(&[RateSegment::forever(total)], exp1(rng))
            .map_err(|_| EngineError::InvalidRate { id: 0, rate: total })?;
        let t = match wait {
            Some(dt) if sys.time() + dt <= until => sys.time() + dt,
            _ => {
                sys.set_time(until);
                return Ok(None);
            }
        };
        sys.set_time(t);
        let mut u = uniform(rng) * total;
        if u < env_rate || particle_total <= 0.0 {
            let env = self.model.sample_env(sys.env(), rng);
            sys.set_env(env);
            return Ok(Some(Occurrence::Environment));
        }
        u -= env_rate;
        let (slot, offset) = cache.tree.find(u.min(particle_total));
        let [motion, branch, _] = cache.rates[slot];
        let occurrence = if offset < motion {
            let x = &sys.particles()[slot].state;
            let next = self.model.sample_motion(x, sys.env(), rng);
            if self.model.is_absorbed(&next) {
                Occurrence::HardKill { slot, state: next }
            } else {
                Occurrence::Motion { slot, state: next }
            }
        } else if offset < motion + branch {
            Occurrence::Branch { slot }
        } else {
            Occurrence::SoftKill { slot }
        };
        Ok(Some(occurrence))
    }

    fn branch_bound(&self) -> Option<f64> {
        self.model.branch_bound()
    }
}

/// Thinning sampler for [`FlowModel`]s.
pub struct Flow<M: FlowModel> {
    pub model: M,
}

impl<M: FlowModel> Flow<M> {
    pub fn new(model: M) -> Self {
        Self { model }
    }
}

/// Acceptance ratio below which the thinning lookahead is halved.
pub const MIN_ACCEPTANCE: f64 = 0.1;
const MAX_HALVINGS: u32 = 16;

enum Candidate<S> {
    Event(FlowEvent<S>, S),
    HardKill(S),
}

impl<M: FlowModel> Flow<M> {
    /// First accepted event of a single particle within `limit` time units,
    /// as `(elapsed, candidate)`.
    fn first_event<R: Rng + ?Sized>(
        &self,
        start: &M::State,
        limit: f64,
        rng: &mut R,
    ) -> Result<Option<(f64, Candidate<M::State>)>, EngineError> {
        let model = &self.model;
        let mut x = start.clone();
        let mut elapsed = 0.0;
        while elapsed < limit {
            let hit = model.boundary_hit_time(&x);
            let mut horizon = model.lookahead(&x).min(hit);
            let rate_now = model.event_rate(&x);
            let mut bound = model.rate_bound(&x, horizon);
            let mut halvings = 0;
            // Halve only while it actually tightens the bound.
            while rate_now < MIN_ACCEPTANCE * bound && halvings < MAX_HALVINGS {
                let tighter = model.rate_bound(&x, 0.5 * horizon);
                if tighter > 0.9 * bound {
                    break;
                }
                horizon *= 0.5;
                bound = tighter;
                halvings += 1;
            }
            let window = horizon.min(limit - elapsed);
            let candidate = if bound > 0.0 { exp1(rng) / bound } else { f64::INFINITY };
            if candidate >= window {
                if window >= hit {
                    let at_boundary = model.flow(&x, hit);
                    return Ok(Some((elapsed + hit, Candidate::HardKill(at_boundary))));
                }
                x = model.flow(&x, window);
                elapsed += window;
                if model.is_absorbed(&x) {
                    return Ok(Some((elapsed, Candidate::HardKill(x))));
                }
                continue;
            }
            x = model.flow(&x, candidate);
            elapsed += candidate;
            if model.is_absorbed(&x) {
                return Ok(Some((elapsed, Candidate::HardKill(x))));
            }
            let rate = model.event_rate(&x);
            if rate > bound * (1.0 + 1e-9) {
                return Err(EngineError::RateBoundViolated { rate, bound });
            }
            if uniform(rng) * bound < rate {
                let event = model.sample_event(&x, rng);
                return Ok(Some((elapsed, Candidate::Event(event, x))));
            }
        }
        Ok(None)
    }
}

impl<M: FlowModel> Dynamics for Flow<M> {
    type State = M::State;
    type Env = ();
    type Cache = ();

    fn new_cache(&self) {}

    fn next_event<R: Rng + ?Sized>(
        &self,
        _cache: &mut (),
        sys: &mut SystemState<M::State, ()>,
        until: f64,
        rng: &mut R,
    ) -> Result<Option<Occurrence<M::State>>, EngineError> {
        sys.touched.clear();
        let t0 = sys.time();
        let mut best: Option<(f64, usize, Candidate<M::State>)> = None;
        let mut tie = false;
        for slot in 0..sys.len() {
            let limit = best.as_ref().map_or(until - t0, |b| b.0);
            if limit <= 0.0 {
                break;
            }
            let found = self.first_event(&sys.particles()[slot].state, limit, rng)?;
            if let Some((dt, cand)) = found {
                match &best {
                    Some((bt, bslot, Candidate::HardKill(_)))
                        if dt == *bt && matches!(cand, Candidate::HardKill(_)) =>
                    {
                        tie = true;
                        // Keep the smaller id.
                        if sys.particles()[slot].id < sys.particles()[*bslot].id {
                            best = Some((dt, slot, cand));
                        }
                    }
                    Some((bt, _, _)) if dt >= *bt => {}
                    _ => {
                        tie = false;
                        best = Some((dt, slot, cand));
                    }
                }
            }
        }
        let Some((dt, winner, cand)) = best else {
            let span = until - t0;
            if span > 0.0 {
                for x in sys.states_mut() {
                    *x = self.model.flow(x, span);
                }
            }
            sys.set_time(until);
            return Ok(None);
        };
        if tie {
            log::warn!("simultaneous hard kills at t = {}; resolved by smallest id", t0 + dt);
            sys.note_hardkill_tie();
        }
        for (slot, x) in sys.states_mut().enumerate() {
            if slot != winner {
                *x = self.model.flow(x, dt);
            }
        }
        sys.set_time(t0 + dt);
        let occurrence = match cand {
            Candidate::HardKill(state) => Occurrence::HardKill { slot: winner, state },
            Candidate::Event(FlowEvent::Jump(state), _) => Occurrence::Motion { slot: winner, state },
            Candidate::Event(FlowEvent::Branch, state) => {
                sys.set_state(winner, state);
                Occurrence::Branch { slot: winner }
            }
            Candidate::Event(FlowEvent::Kill, state) => {
                sys.set_state(winner, state);
                Occurrence::SoftKill { slot: winner }
            }
        };
        Ok(Some(occurrence))
    }

    fn branch_bound(&self) -> Option<f64> {
        self.model.branch_bound()
    }
}
