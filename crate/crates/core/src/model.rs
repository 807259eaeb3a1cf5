//! Contracts for the single-particle Markov process driving the system.
//!
//! Two classes are supported. [`JumpModel`]s hold all rates constant between
//! jumps, so the engine samples them exactly by competing exponentials.
//! [`FlowModel`]s drift deterministically between jumps with rates that vary
//! along the flow; the engine samples them by thinning against
//! [`FlowModel::rate_bound`].

use std::fmt::Debug;

use rand::Rng;

/// Marker bundle for particle states.
pub trait ParticleState: Clone + Debug + Send + Sync + 'static {}
impl<T: Clone + Debug + Send + Sync + 'static> ParticleState for T {}

/// Pure-jump single-particle dynamics with branching rate `b` and soft killing
/// rate `kappa`. A motion jump into an absorbed state is a hard kill.
///
/// `Env` is an optional environment shared by all particles (for instance a
/// global regime switch). It jumps at [`JumpModel::env_rate`]; models without
/// one use `()`.
pub trait JumpModel: Send + Sync {
    type State: ParticleState;
    type Env: ParticleState;

    fn motion_rate(&self, x: &Self::State, env: &Self::Env) -> f64;

    fn sample_motion<R: Rng + ?Sized>(&self, x: &Self::State, env: &Self::Env, rng: &mut R) -> Self::State;

    fn branch_rate(&self, x: &Self::State, env: &Self::Env) -> f64;

    fn kill_rate(&self, x: &Self::State, env: &Self::Env) -> f64;

    fn is_absorbed(&self, _x: &Self::State) -> bool {
        false
    }

    /// Declared `sup b`, or `None` when the branching rate is unbounded.
    fn branch_bound(&self) -> Option<f64>;

    fn env_rate(&self, _env: &Self::Env) -> f64 {
        0.0
    }

    fn sample_env<R: Rng + ?Sized>(&self, env: &Self::Env, _rng: &mut R) -> Self::Env {
        env.clone()
    }

    /// Exact motion transition rates out of `x`, self-loops included, for
    /// models that can be enumerated. Used by the semigroup oracle.
    fn motion_targets(&self, _x: &Self::State, _env: &Self::Env) -> Option<Vec<(Self::State, f64)>> {
        None
    }
}

/// What happens to a flowing particle at an accepted event.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowEvent<S> {
    /// A velocity jump (scatter) to the given state.
    Jump(S),
    Branch,
    Kill,
}

/// Piecewise-deterministic single-particle dynamics.
pub trait FlowModel: Send + Sync {
    type State: ParticleState;

    fn flow(&self, x: &Self::State, dt: f64) -> Self::State;

    /// Time until the flow from `x` reaches the absorbing boundary
    /// (`f64::INFINITY` when it never does).
    fn boundary_hit_time(&self, x: &Self::State) -> f64;

    fn is_absorbed(&self, x: &Self::State) -> bool;

    /// Total intensity of jumps, branching and killing at `x`.
    fn event_rate(&self, x: &Self::State) -> f64;

    /// A rate that dominates `event_rate` along the flow from `x` over
    /// `[0, horizon]`; `horizon` never exceeds `boundary_hit_time(x)`.
    fn rate_bound(&self, x: &Self::State, horizon: f64) -> f64;

    /// Initial lookahead for thinning from `x`.
    fn lookahead(&self, x: &Self::State) -> f64;

    /// Chooses the event type at `x`, proportionally to the component rates.
    fn sample_event<R: Rng + ?Sized>(&self, x: &Self::State, rng: &mut R) -> FlowEvent<Self::State>;

    fn branch_rate(&self, x: &Self::State) -> f64;

    fn kill_rate(&self, x: &Self::State) -> f64;

    fn branch_bound(&self) -> Option<f64>;
}
