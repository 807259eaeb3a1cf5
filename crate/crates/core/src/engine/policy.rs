//! Resampling and selection probabilities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::state::Particle;

/// What a policy sees at a killing or branching event: the configuration just
/// before the interaction and the acting particle. For a kill, the actor's
/// state is its final (possibly boundary) state.
#[derive(Debug, Clone, Copy)]
pub struct Interaction<'a, S> {
    pub particles: &'a [Particle<S>],
    pub actor: usize,
    pub time: f64,
}

impl<'a, S> Interaction<'a, S> {
    pub fn size(&self) -> usize {
        self.particles.len()
    }

    pub fn actor_state(&self) -> &'a S {
        &self.particles[self.actor].state
    }

    pub fn actor_id(&self) -> u64 {
        self.particles[self.actor].id
    }
}

pub trait InteractionPolicy<S>: Send + Sync {
    /// `p`: probability that a killing triggers a resampling.
    fn resample_probability(&self, ctx: &Interaction<'_, S>) -> f64;

    /// `q`: probability that a branching triggers a selection.
    fn select_probability(&self, ctx: &Interaction<'_, S>) -> f64;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("nmin = 1 is not allowed (a resampling would need a second particle)")]
    NminOne,
    #[error("nmin ({nmin}) exceeds nmax ({nmax})")]
    Inverted { nmin: usize, nmax: usize },
}

/// Built-in policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Policy {
    /// `p = q = 0`: the classical branching process.
    Independent,
    /// `p = 1{n >= 2}`, `q = 1`: constant population size.
    Moran,
    /// `p = 1{n = nmin}`, `q = 1{n = nmax}`; `nmax = None` means no upper bound.
    NminNmax { nmin: usize, nmax: Option<usize> },
    /// `p = 1{n >= 2}/(n+1)`, `q = 1 - 1/(n+1)`.
    Competitive,
}

impl Policy {
    pub fn nmin_nmax(nmin: usize, nmax: Option<usize>) -> Result<Self, PolicyError> {
        if nmin == 1 {
            return Err(PolicyError::NminOne);
        }
        if let Some(nmax) = nmax {
            if nmin > nmax {
                return Err(PolicyError::Inverted { nmin, nmax });
            }
        }
        Ok(Policy::NminNmax { nmin, nmax })
    }

    /// Fixed-size Fleming–Viot / Moran configuration with `n` particles.
    pub fn fixed_size(n: usize) -> Result<Self, PolicyError> {
        Self::nmin_nmax(n, Some(n))
    }

    pub fn p(&self, size: usize) -> f64 {
        match *self {
            Policy::Independent => 0.0,
            Policy::Moran => indicator(size >= 2),
            Policy::NminNmax { nmin, .. } => indicator(size == nmin && size >= 2),
            Policy::Competitive => indicator(size >= 2) / (size as f64 + 1.0),
        }
    }

    pub fn q(&self, size: usize) -> f64 {
        match *self {
            Policy::Independent => 0.0,
            Policy::Moran => 1.0,
            Policy::NminNmax { nmax, .. } => indicator(Some(size) == nmax),
            Policy::Competitive => 1.0 - 1.0 / (size as f64 + 1.0),
        }
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

impl<S> InteractionPolicy<S> for Policy {
    fn resample_probability(&self, ctx: &Interaction<'_, S>) -> f64 {
        self.p(ctx.size())
    }

    fn select_probability(&self, ctx: &Interaction<'_, S>) -> f64 {
        self.q(ctx.size())
    }
}

/// Policy from a pair of closures.
pub struct FnPolicy<P, Q> {
    pub p: P,
    pub q: Q,
}

impl<S, P, Q> InteractionPolicy<S> for FnPolicy<P, Q>
where
    P: Fn(&Interaction<'_, S>) -> f64 + Send + Sync,
    Q: Fn(&Interaction<'_, S>) -> f64 + Send + Sync,
{
    fn resample_probability(&self, ctx: &Interaction<'_, S>) -> f64 {
        (self.p)(ctx)
    }

    fn select_probability(&self, ctx: &Interaction<'_, S>) -> f64 {
        (self.q)(ctx)
    }
}
