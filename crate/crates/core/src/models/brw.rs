//! Branching random walk on `{0..n}` with a randomly switching branching rate.
//!
//! The walk holds for an Exp(1) time, then steps right with probability `p`
//! and left otherwise; steps out of `{0..n}` are suppressed. The regime
//! alternates between off (branching rate 0, left at rate `s_on`) and on
//! (left at rate `s_off`). On entering the on regime a fresh branching rate
//! is drawn from the exponential law with rate `rate_draw`.
//!
//! [`Brw`] keeps the regime in each particle's state; [`BrwShared`] keeps a
//! single regime for the whole system.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::model::JumpModel;
use crate::rng::{exp1, uniform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrwSpec {
    pub n: u32,
    pub p: f64,
    pub s_on: f64,
    pub s_off: f64,
    pub rate_draw: f64,
    /// Per-site soft killing rate; missing sites have rate 0.
    #[serde(default)]
    pub kill: Vec<f64>,
}

impl BrwSpec {
    fn validate(&self) -> Result<(), ModelError> {
        if self.n < 1 {
            return Err(ModelError::Parameter {
                name: "n",
                value: f64::from(self.n),
            });
        }
        let checks = [
            ("p", self.p, self.p > 0.0 && self.p < 1.0),
            ("s_on", self.s_on, self.s_on > 0.0 && self.s_on.is_finite()),
            ("s_off", self.s_off, self.s_off > 0.0 && self.s_off.is_finite()),
            (
                "rate_draw",
                self.rate_draw,
                self.rate_draw > 0.0 && self.rate_draw.is_finite(),
            ),
        ];
        for (name, value, ok) in checks {
            if !ok {
                return Err(ModelError::Parameter { name, value });
            }
        }
        if let Some(&k) = self.kill.iter().find(|k| !(**k >= 0.0 && k.is_finite())) {
            return Err(ModelError::Parameter { name: "kill", value: k });
        }
        Ok(())
    }

    fn kill_at(&self, site: u32) -> f64 {
        self.kill.get(site as usize).copied().unwrap_or(0.0)
    }

    fn step<R: Rng + ?Sized>(&self, site: u32, rng: &mut R) -> u32 {
        if uniform(rng) < self.p {
            (site + 1).min(self.n)
        } else {
            site.saturating_sub(1)
        }
    }

    fn walk_targets(&self, site: u32) -> [(u32, f64); 2] {
        [((site + 1).min(self.n), self.p), (site.saturating_sub(1), 1.0 - self.p)]
    }
}

/// Branching regime. `rate` is meaningful only when `on`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Regime {
    pub on: bool,
    pub rate: f64,
}

impl Regime {
    pub const OFF: Regime = Regime { on: false, rate: 0.0 };

    fn toggled<R: Rng + ?Sized>(self, rate_draw: f64, rng: &mut R) -> Regime {
        if self.on {
            Regime::OFF
        } else {
            Regime {
                on: true,
                rate: exp1(rng) / rate_draw,
            }
        }
    }

    fn switch_rate(self, spec: &BrwSpec) -> f64 {
        if self.on {
            spec.s_off
        } else {
            spec.s_on
        }
    }

    fn branch_rate(self) -> f64 {
        if self.on {
            self.rate
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrwState {
    pub site: u32,
    pub regime: Regime,
}

/// Per-particle regime variant.
#[derive(Debug, Clone)]
pub struct Brw {
    spec: BrwSpec,
}

pub fn brw_make(spec: BrwSpec) -> Result<Brw, ModelError> {
    spec.validate()?;
    Ok(Brw { spec })
}

impl Brw {
    pub fn spec(&self) -> &BrwSpec {
        &self.spec
    }
}

impl JumpModel for Brw {
    type State = BrwState;
    type Env = ();

    fn motion_rate(&self, x: &BrwState, _env: &()) -> f64 {
        1.0 + x.regime.switch_rate(&self.spec)
    }

    fn sample_motion<R: Rng + ?Sized>(&self, x: &BrwState, _env: &(), rng: &mut R) -> BrwState {
        let switch = x.regime.switch_rate(&self.spec);
        if uniform(rng) * (1.0 + switch) < 1.0 {
            BrwState {
                site: self.spec.step(x.site, rng),
                regime: x.regime,
            }
        } else {
            BrwState {
                site: x.site,
                regime: x.regime.toggled(self.spec.rate_draw, rng),
            }
        }
    }

    fn branch_rate(&self, x: &BrwState, _env: &()) -> f64 {
        x.regime.branch_rate()
    }

    fn kill_rate(&self, x: &BrwState, _env: &()) -> f64 {
        self.spec.kill_at(x.site)
    }

    fn branch_bound(&self) -> Option<f64> {
        None
    }
}

/// Shared regime variant: the regime is a system-wide environment.
#[derive(Debug, Clone)]
pub struct BrwShared {
    spec: BrwSpec,
}

pub fn brw_shared_make(spec: BrwSpec) -> Result<BrwShared, ModelError> {
    spec.validate()?;
    Ok(BrwShared { spec })
}

impl BrwShared {
    pub fn spec(&self) -> &BrwSpec {
        &self.spec
    }
}

impl JumpModel for BrwShared {
    type State = u32;
    type Env = Regime;

    fn motion_rate(&self, _x: &u32, _env: &Regime) -> f64 {
        1.0
    }

    fn sample_motion<R: Rng + ?Sized>(&self, x: &u32, _env: &Regime, rng: &mut R) -> u32 {
        self.spec.step(*x, rng)
    }

    fn branch_rate(&self, _x: &u32, env: &Regime) -> f64 {
        env.branch_rate()
    }

    fn kill_rate(&self, x: &u32, _env: &Regime) -> f64 {
        self.spec.kill_at(*x)
    }

    fn branch_bound(&self) -> Option<f64> {
        None
    }

    fn env_rate(&self, env: &Regime) -> f64 {
        env.switch_rate(&self.spec)
    }

    fn sample_env<R: Rng + ?Sized>(&self, env: &Regime, rng: &mut R) -> Regime {
        env.toggled(self.spec.rate_draw, rng)
    }

    fn motion_targets(&self, x: &u32, _env: &Regime) -> Option<Vec<(u32, f64)>> {
        Some(self.spec.walk_targets(*x).to_vec())
    }
}
