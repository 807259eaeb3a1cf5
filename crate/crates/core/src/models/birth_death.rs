//! Birth-death chains on `{floor..cap}^d` with branching and killing.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use super::ModelError;
use crate::model::JumpModel;
use crate::rng::uniform;

pub type BdState = SmallVec<[u32; 2]>;
pub type RateFn = Arc<dyn Fn(&[u32]) -> f64 + Send + Sync>;
pub type StatePredicate = Arc<dyn Fn(&[u32]) -> bool + Send + Sync>;

/// What the floor check does with death rates at the lower boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Death rates must vanish on the floor; construction fails otherwise.
    #[default]
    Strict,
    /// Moves below the floor or above the cap are clamped into self-loops.
    Reflect,
}

#[derive(Clone)]
pub struct BirthDeathSpec {
    pub dim: usize,
    pub birth: Vec<RateFn>,
    pub death: Vec<RateFn>,
    pub branch: RateFn,
    pub kill: RateFn,
    /// Lowest value of every coordinate.
    pub floor: u32,
    /// Highest value of every coordinate; `None` for an unbounded chain.
    pub cap: Option<u32>,
    pub boundary: Boundary,
    pub absorbing: Option<StatePredicate>,
    /// `sup b` over the state space, `None` when unbounded.
    pub branch_bound: Option<f64>,
}

impl fmt::Debug for BirthDeathSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BirthDeathSpec")
            .field("dim", &self.dim)
            .field("floor", &self.floor)
            .field("cap", &self.cap)
            .field("boundary", &self.boundary)
            .field("branch_bound", &self.branch_bound)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub struct BirthDeath {
    spec: BirthDeathSpec,
}

pub fn bd_make(spec: BirthDeathSpec) -> Result<BirthDeath, ModelError> {
    if spec.birth.len() != spec.dim {
        return Err(ModelError::Dimension {
            expected: spec.dim,
            got: spec.birth.len(),
        });
    }
    if spec.death.len() != spec.dim {
        return Err(ModelError::Dimension {
            expected: spec.dim,
            got: spec.death.len(),
        });
    }
    if let Some(cap) = spec.cap {
        if cap <= spec.floor {
            return Err(ModelError::CapTooSmall {
                min: spec.floor + 1,
                got: cap,
            });
        }
    }
    if spec.boundary == Boundary::Strict {
        let origin = vec![spec.floor; spec.dim];
        for (coord, death) in spec.death.iter().enumerate() {
            let rate = death(&origin);
            if rate != 0.0 {
                return Err(ModelError::DeathAtFloor { coord, rate });
            }
        }
    }
    Ok(BirthDeath { spec })
}

/// The one-dimensional benchmark chain on `{1..M}`: jumps at rate `x^2`, to
/// `max(1, x-1)` with probability `x/(x+1)` and to `min(M, x+1)` otherwise,
/// branching at rate `x`, no killing.
pub fn benchmark(cap: Option<u32>) -> Result<BirthDeath, ModelError> {
    if let Some(m) = cap {
        if m < 2 {
            return Err(ModelError::CapTooSmall { min: 2, got: m });
        }
    }
    bd_make(benchmark_spec(cap, Arc::new(|x| x[0] as f64), Arc::new(|_| 0.0)))
}

/// The benchmark chain with `b = 0` and `kappa(x) = M - x`.
pub fn bd_killed_make(cap: Option<u32>) -> Result<BirthDeath, ModelError> {
    let m = cap.ok_or(ModelError::InfiniteCap)?;
    if m < 2 {
        return Err(ModelError::CapTooSmall { min: 2, got: m });
    }
    let mut spec = benchmark_spec(cap, Arc::new(|_| 0.0), Arc::new(move |x| (m - x[0]) as f64));
    spec.branch_bound = Some(0.0);
    bd_make(spec)
}

fn benchmark_spec(cap: Option<u32>, branch: RateFn, kill: RateFn) -> BirthDeathSpec {
    BirthDeathSpec {
        dim: 1,
        birth: vec![Arc::new(|x| {
            let x = x[0] as f64;
            x * x / (x + 1.0)
        })],
        death: vec![Arc::new(|x| {
            let x = x[0] as f64;
            x * x * x / (x + 1.0)
        })],
        branch,
        kill,
        floor: 1,
        cap,
        boundary: Boundary::Reflect,
        absorbing: None,
        branch_bound: cap.map(f64::from),
    }
}

impl BirthDeath {
    pub fn spec(&self) -> &BirthDeathSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn cap(&self) -> Option<u32> {
        self.spec.cap
    }

    pub fn floor(&self) -> u32 {
        self.spec.floor
    }

    /// Builds a state, checking its dimension and range.
    pub fn state(&self, coords: &[u32]) -> Result<BdState, ModelError> {
        if coords.len() != self.spec.dim {
            return Err(ModelError::Dimension {
                expected: self.spec.dim,
                got: coords.len(),
            });
        }
        for &c in coords {
            if c < self.spec.floor || self.spec.cap.is_some_and(|m| c > m) {
                return Err(ModelError::Parameter {
                    name: "coordinate",
                    value: f64::from(c),
                });
            }
        }
        Ok(SmallVec::from_slice(coords))
    }

    /// Every state of a bounded chain in lexicographic order.
    pub fn enumerate(&self) -> Option<Vec<BdState>> {
        let cap = self.spec.cap?;
        let lo = self.spec.floor;
        let mut out = vec![BdState::new()];
        for _ in 0..self.spec.dim {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (lo..=cap).map(move |v| {
                        let mut s = prefix.clone();
                        s.push(v);
                        s
                    })
                })
                .collect();
        }
        Some(out)
    }

    /// `(birth, death)` rates of coordinate `i` at `x`.
    pub fn coordinate_rates(&self, x: &[u32], i: usize) -> (f64, f64) {
        let birth = (self.spec.birth[i])(x);
        let death = if x[i] == self.spec.floor && self.spec.boundary == Boundary::Strict {
            0.0
        } else {
            (self.spec.death[i])(x)
        };
        (birth, death)
    }

    fn moved(&self, x: &[u32], i: usize, up: bool) -> BdState {
        let mut y = BdState::from_slice(x);
        y[i] = if up {
            match self.spec.cap {
                Some(m) => (y[i] + 1).min(m),
                None => y[i] + 1,
            }
        } else {
            y[i].saturating_sub(1).max(self.spec.floor)
        };
        y
    }
}

impl JumpModel for BirthDeath {
    type State = BdState;
    type Env = ();

    fn motion_rate(&self, x: &BdState, _env: &()) -> f64 {
        (0..self.spec.dim)
            .map(|i| {
                let (b, d) = self.coordinate_rates(x, i);
                b + d
            })
            .sum()
    }

    fn sample_motion<R: Rng + ?Sized>(&self, x: &BdState, _env: &(), rng: &mut R) -> BdState {
        let total = self.motion_rate(x, &());
        let mut u = uniform(rng) * total;
        let mut last = None;
        for i in 0..self.spec.dim {
            let (b, d) = self.coordinate_rates(x, i);
            if b > 0.0 {
                if u < b {
                    return self.moved(x, i, true);
                }
                u -= b;
                last = Some((i, true));
            }
            if d > 0.0 {
                if u < d {
                    return self.moved(x, i, false);
                }
                u -= d;
                last = Some((i, false));
            }
        }
        match last {
            Some((i, up)) => self.moved(x, i, up),
            None => x.clone(),
        }
    }

    fn branch_rate(&self, x: &BdState, _env: &()) -> f64 {
        (self.spec.branch)(x)
    }

    fn kill_rate(&self, x: &BdState, _env: &()) -> f64 {
        (self.spec.kill)(x)
    }

    fn is_absorbed(&self, x: &BdState) -> bool {
        self.spec.absorbing.as_ref().is_some_and(|a| a(x))
    }

    fn branch_bound(&self) -> Option<f64> {
        self.spec.branch_bound
    }

    fn motion_targets(&self, x: &BdState, _env: &()) -> Option<Vec<(BdState, f64)>> {
        let mut out = Vec::with_capacity(2 * self.spec.dim);
        for i in 0..self.spec.dim {
            let (b, d) = self.coordinate_rates(x, i);
            if b > 0.0 {
                out.push((self.moved(x, i, true), b));
            }
            if d > 0.0 {
                out.push((self.moved(x, i, false), d));
            }
        }
        Some(out)
    }
}

/// A rate defined piecewise over integer states by polynomials:
/// on `lo..=hi` the value is `sum_k coeffs[k] * x^k`. States covered by no
/// piece have rate 0; the first matching piece wins.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PiecewisePoly {
    pub pieces: Vec<Piece>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub lo: u32,
    #[serde(default)]
    pub hi: Option<u32>,
    pub coeffs: Vec<f64>,
}

impl PiecewisePoly {
    pub fn constant(c: f64) -> Self {
        Self {
            pieces: vec![Piece {
                lo: 0,
                hi: None,
                coeffs: vec![c],
            }],
        }
    }

    pub fn eval(&self, x: u32) -> f64 {
        let Some(piece) = self.pieces.iter().find(|p| x >= p.lo && p.hi.is_none_or(|h| x <= h)) else {
            return 0.0;
        };
        let x = f64::from(x);
        piece.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// Largest value over `lo..=hi`.
    pub fn max_over(&self, lo: u32, hi: u32) -> f64 {
        (lo..=hi).map(|x| self.eval(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// A rate function reading coordinate `i`.
    pub fn rate_fn(self, i: usize) -> RateFn {
        Arc::new(move |x: &[u32]| self.eval(x[i]))
    }
}
