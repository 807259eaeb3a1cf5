use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::rng::uniform_index;

#[derive(Debug, Clone, PartialEq)]
pub struct Particle<S> {
    pub id: u64,
    pub state: S,
    pub birth_time: f64,
}

/// Event counters. `events` counts branching and killing events only; motion
/// jumps and environment switches are tallied separately.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    /// Resampling events (`A`).
    pub resamples: u64,
    /// Selection events (`B`).
    pub selections: u64,
    /// Branching plus killing events (`C`).
    pub events: u64,
    /// Branching events (`beta`).
    pub branches: u64,
    pub kills: u64,
    pub hard_kills: u64,
    pub motion_jumps: u64,
    pub env_switches: u64,
}

impl Counters {
    /// Everything the explosion guard counts.
    pub fn total_steps(&self) -> u64 {
        self.events + self.motion_jumps + self.env_switches
    }
}

/// Log of the resampling weight factor `(n-1)/n`.
#[inline]
pub fn resample_log_factor(n: usize) -> f64 {
    (-1.0 / n as f64).ln_1p()
}

/// Log of the selection weight factor `(n+1)/n`.
#[inline]
pub fn select_log_factor(n: usize) -> f64 {
    (1.0 / n as f64).ln_1p()
}

/// Configuration of the interacting system at a fixed time.
#[derive(Debug, Clone)]
pub struct SystemState<S, E = ()> {
    particles: Vec<Particle<S>>,
    env: E,
    time: f64,
    next_id: u64,
    counters: Counters,
    log_weight_a: f64,
    log_weight_b: f64,
    initial_size: usize,
    max_seen: usize,
    hardkill_ties: u64,
    pub(crate) touched: Vec<usize>,
    pub(crate) all_dirty: bool,
}

impl<S: Clone> SystemState<S, ()> {
    pub fn from_states(states: impl IntoIterator<Item = S>) -> Self {
        Self::new(states, ())
    }
}

impl<S: Clone, E> SystemState<S, E> {
    /// Particles get ids `1..=n` in the order given.
    pub fn new(states: impl IntoIterator<Item = S>, env: E) -> Self {
        let particles: Vec<Particle<S>> = states
            .into_iter()
            .enumerate()
            .map(|(i, state)| Particle {
                id: i as u64 + 1,
                state,
                birth_time: 0.0,
            })
            .collect();
        let n = particles.len();
        Self {
            particles,
            env,
            time: 0.0,
            next_id: n as u64 + 1,
            counters: Counters::default(),
            log_weight_a: 0.0,
            log_weight_b: 0.0,
            initial_size: n,
            max_seen: n,
            hardkill_ties: 0,
            touched: Vec::new(),
            all_dirty: true,
        }
    }

    pub fn particles(&self) -> &[Particle<S>] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn env(&self) -> &E {
        &self.env
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn log_weight_a(&self) -> f64 {
        self.log_weight_a
    }

    pub fn log_weight_b(&self) -> f64 {
        self.log_weight_b
    }

    pub fn log_weight(&self) -> f64 {
        self.log_weight_a + self.log_weight_b
    }

    pub fn initial_size(&self) -> usize {
        self.initial_size
    }

    /// Largest population seen so far (`R`).
    pub fn max_particles_seen(&self) -> usize {
        self.max_seen
    }

    /// Number of simultaneous hard kills resolved by id order.
    pub fn hardkill_ties(&self) -> u64 {
        self.hardkill_ties
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// `sum_i f(x_i)`.
    pub fn occupation<F: Fn(&S) -> f64 + ?Sized>(&self, f: &F) -> f64 {
        self.particles.iter().map(|p| f(&p.state)).sum()
    }

    /// Occupation divided by the initial population size.
    pub fn normalized_occupation<F: Fn(&S) -> f64 + ?Sized>(&self, f: &F) -> f64 {
        if self.initial_size == 0 {
            0.0
        } else {
            self.occupation(f) / self.initial_size as f64
        }
    }

    pub fn slot_of(&self, id: u64) -> Option<usize> {
        self.particles.iter().position(|p| p.id == id)
    }

    /// Removes the killed particle and duplicates a survivor chosen uniformly;
    /// returns the duplicated particle's id.
    pub fn apply_resampling<R: Rng + ?Sized>(&mut self, killed: u64, rng: &mut R) -> Result<u64, EngineError> {
        let slot = self.slot_of(killed).ok_or(EngineError::UnknownParticle(killed))?;
        self.resample_slot(slot, rng)
    }

    /// Adds a newborn copy of the branched particle, then removes one of the
    /// `n + 1` particles (newborn included) uniformly; returns the removed id.
    pub fn apply_selection<R: Rng + ?Sized>(&mut self, branched: u64, rng: &mut R) -> Result<u64, EngineError> {
        let slot = self.slot_of(branched).ok_or(EngineError::UnknownParticle(branched))?;
        Ok(self.select_slot(slot, rng))
    }

    pub(crate) fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub(crate) fn set_env(&mut self, env: E) {
        self.env = env;
        self.all_dirty = true;
    }

    pub(crate) fn counters_mut(&mut self) -> &mut Counters {
        &mut self.counters
    }

    pub(crate) fn note_hardkill_tie(&mut self) {
        self.hardkill_ties += 1;
    }

    pub(crate) fn set_state(&mut self, slot: usize, state: S) {
        self.particles[slot].state = state;
        self.touched.push(slot);
    }

    /// Flow-type updates that touch every particle.
    pub(crate) fn states_mut(&mut self) -> impl Iterator<Item = &mut S> {
        self.all_dirty = true;
        self.particles.iter_mut().map(|p| &mut p.state)
    }

    fn push_copy(&mut self, state: S) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.particles.push(Particle {
            id,
            state,
            birth_time: self.time,
        });
        self.touched.push(self.particles.len() - 1);
        self.max_seen = self.max_seen.max(self.particles.len());
        id
    }

    fn remove_slot(&mut self, slot: usize) -> Particle<S> {
        let removed = self.particles.swap_remove(slot);
        if slot < self.particles.len() {
            self.touched.push(slot);
        }
        removed
    }

    /// Plain branching: newborn copy, size grows by one.
    pub(crate) fn branch_slot(&mut self, slot: usize) -> u64 {
        let state = self.particles[slot].state.clone();
        self.push_copy(state)
    }

    /// Plain killing: size shrinks by one.
    pub(crate) fn kill_slot(&mut self, slot: usize) -> u64 {
        self.remove_slot(slot).id
    }

    pub(crate) fn resample_slot<R: Rng + ?Sized>(&mut self, slot: usize, rng: &mut R) -> Result<u64, EngineError> {
        let n = self.particles.len();
        if n < 2 {
            return Err(EngineError::ResampleAtSizeOne { time: self.time });
        }
        let k = uniform_index(rng, n - 1);
        let partner = if k < slot { k } else { k + 1 };
        let partner_id = self.particles[partner].id;
        let state = self.particles[partner].state.clone();
        self.remove_slot(slot);
        self.push_copy(state);
        self.counters.resamples += 1;
        self.log_weight_a += resample_log_factor(n);
        Ok(partner_id)
    }

    pub(crate) fn select_slot<R: Rng + ?Sized>(&mut self, slot: usize, rng: &mut R) -> u64 {
        let n = self.particles.len();
        let state = self.particles[slot].state.clone();
        self.push_copy(state);
        let j = uniform_index(rng, n + 1);
        let removed = self.remove_slot(j).id;
        self.counters.selections += 1;
        self.log_weight_b += select_log_factor(n);
        removed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Motion,
    Branch,
    Softkill,
    Hardkill,
    Resample,
    Select,
    /// Switch of a shared environment; `actor` is 0.
    Environment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub actor: u64,
    pub partner: Option<u64>,
    pub size_before: usize,
    pub size_after: usize,
}

impl EventRecord {
    /// Log weight factor this event contributes (zero unless it is a
    /// resampling or a selection).
    pub fn log_factor(&self) -> f64 {
        match self.kind {
            EventKind::Resample => resample_log_factor(self.size_before),
            EventKind::Select => select_log_factor(self.size_before),
            _ => 0.0,
        }
    }
}

/// State summary recorded at a grid time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub size: usize,
    pub resamples: u64,
    pub selections: u64,
    pub events: u64,
    pub branches: u64,
    pub log_pi_a: f64,
    pub log_pi_b: f64,
    pub occ_f: f64,
    pub occ_1: f64,
}

impl Snapshot {
    pub fn of<S: Clone, E, F: Fn(&S) -> f64 + ?Sized>(sys: &SystemState<S, E>, f: &F) -> Self {
        let c = sys.counters();
        Self {
            time: sys.time(),
            size: sys.len(),
            resamples: c.resamples,
            selections: c.selections,
            events: c.events,
            branches: c.branches,
            log_pi_a: sys.log_weight_a(),
            log_pi_b: sys.log_weight_b(),
            occ_f: sys.occupation(f),
            occ_1: sys.len() as f64,
        }
    }

    pub fn log_weight(&self) -> f64 {
        self.log_pi_a + self.log_pi_b
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory<S, E = ()> {
    pub snapshots: Vec<Snapshot>,
    pub events: Option<Vec<EventRecord>>,
    pub final_state: SystemState<S, E>,
}

impl<S, E> Trajectory<S, E> {
    /// True when a simultaneous hard kill had to be broken by id order.
    pub fn flagged(&self) -> bool {
        self.final_state.hardkill_ties > 0
    }
}
