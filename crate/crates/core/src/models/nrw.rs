//! h-transformed neutron random walk in the slab `(0, L)`.
//!
//! A particle at position `r` with velocity `v` drifts at speed `v` and
//! scatters at rate `alpha(r, v)` to `v'` drawn from `pi(r, v, .)`. It is
//! absorbed on leaving the slab. With `kappa(r, v)` the time to exit and
//! `h = phi(kappa)`, the transformed particle scatters at rate
//! `alpha * sum_v' pi h(v') / h(v)` with kernel proportional to `pi h(v')`,
//! and branches or dies at rates `(Lh/h)+` and `(Lh/h)-`. It never reaches
//! the boundary.
//!
//! The state keeps both wall distances so that a particle close to either
//! wall has a precise exit time.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::model::{FlowEvent, FlowModel};
use crate::rng::{uniform, weighted_index};

const PHI_SLOPE_MAX: f64 = 4.0 / 3.0;
const KERNEL_TOLERANCE: f64 = 1e-9;

/// Scatter parameters on the part of the slab up to `end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub end: f64,
    /// Scatter rate per velocity.
    pub alpha: Vec<f64>,
    /// Row-stochastic scatter kernel over velocities.
    pub kernel: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NrwSlabSpec {
    pub length: f64,
    pub velocities: Vec<f64>,
    pub v_min: f64,
    pub v_max: f64,
    /// Regions ordered by `end`; the last one extends to the right wall.
    pub regions: Vec<Region>,
}

impl NrwSlabSpec {
    /// Homogeneous slab with constant scatter rate and uniform kernel.
    pub fn uniform(length: f64, velocities: Vec<f64>, alpha: f64) -> Self {
        let k = velocities.len();
        let speeds = velocities.iter().map(|v| v.abs());
        let v_min = speeds.clone().fold(f64::INFINITY, f64::min);
        let v_max = speeds.fold(0.0, f64::max);
        Self {
            length,
            v_min,
            v_max,
            regions: vec![Region {
                end: length,
                alpha: vec![alpha; k],
                kernel: vec![vec![1.0 / k as f64; k]; k],
            }],
            velocities,
        }
    }

    /// `L = 4`, velocities `{-1.5, -0.5, 0.5, 1.5}`, `alpha = 1`, uniform kernel.
    pub fn preset() -> Self {
        Self::uniform(4.0, vec![-1.5, -0.5, 0.5, 1.5], 1.0)
    }

    pub fn alpha_max(&self) -> f64 {
        self.regions
            .iter()
            .flat_map(|r| r.alpha.iter().copied())
            .fold(0.0, f64::max)
    }

    /// Plateau height of the smoothing function.
    pub fn delta(&self) -> f64 {
        0.5 / self.alpha_max()
    }

    fn region_at(&self, r: f64) -> &Region {
        self.regions
            .iter()
            .find(|reg| r <= reg.end)
            .unwrap_or_else(|| self.regions.last().expect("validated"))
    }

    fn validate(&self) -> Result<(), ModelError> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(ModelError::Parameter {
                name: "length",
                value: self.length,
            });
        }
        if !(self.v_min > 0.0 && self.v_min <= self.v_max && self.v_max.is_finite()) {
            return Err(ModelError::Parameter {
                name: "v_min",
                value: self.v_min,
            });
        }
        if self.velocities.is_empty() {
            return Err(ModelError::Parameter {
                name: "velocities",
                value: 0.0,
            });
        }
        for &v in &self.velocities {
            if v == 0.0 || !(self.v_min..=self.v_max).contains(&v.abs()) {
                return Err(ModelError::Velocity(v));
            }
        }
        if self.regions.is_empty() {
            return Err(ModelError::Parameter {
                name: "regions",
                value: 0.0,
            });
        }
        let k = self.velocities.len();
        let mut prev = 0.0;
        for reg in &self.regions {
            if !(reg.end > prev) {
                return Err(ModelError::Parameter {
                    name: "region end",
                    value: reg.end,
                });
            }
            prev = reg.end;
            if reg.alpha.len() != k {
                return Err(ModelError::Dimension {
                    expected: k,
                    got: reg.alpha.len(),
                });
            }
            if let Some(&a) = reg.alpha.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
                return Err(ModelError::Parameter {
                    name: "alpha",
                    value: a,
                });
            }
            if reg.kernel.len() != k {
                return Err(ModelError::Dimension {
                    expected: k,
                    got: reg.kernel.len(),
                });
            }
            for (row, probs) in reg.kernel.iter().enumerate() {
                if probs.len() != k || probs.iter().any(|p| !(*p >= 0.0)) {
                    return Err(ModelError::Kernel { row, sum: f64::NAN });
                }
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > KERNEL_TOLERANCE {
                    return Err(ModelError::Kernel { row, sum });
                }
            }
        }
        if !(self.alpha_max() > 0.0) {
            return Err(ModelError::Parameter {
                name: "alpha_max",
                value: self.alpha_max(),
            });
        }
        Ok(())
    }
}

/// Smoothing function: identity on `[0, delta/2]`, constant `delta` on
/// `[delta, inf)`, monotone cubic in between.
pub fn phi(x: f64, delta: f64) -> f64 {
    let w = 0.5 * delta;
    if x <= w {
        x.max(0.0)
    } else if x >= delta {
        delta
    } else {
        let s = (x - w) / w;
        w + w * (s + s * s - s * s * s)
    }
}

pub fn phi_prime(x: f64, delta: f64) -> f64 {
    let w = 0.5 * delta;
    if x <= w {
        1.0
    } else if x >= delta {
        0.0
    } else {
        let s = (x - w) / w;
        1.0 + 2.0 * s - 3.0 * s * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NrwState {
    /// Distance to the left wall, i.e. the position.
    pub left: f64,
    /// Distance to the right wall.
    pub right: f64,
    /// Index into the velocity set.
    pub v: usize,
}

impl NrwState {
    pub fn position(&self) -> f64 {
        self.left
    }
}

struct Local {
    scatter: f64,
    lh_over_h: f64,
}

fn exit_time(spec: &NrwSlabSpec, x: &NrwState, v: usize) -> f64 {
    let speed = spec.velocities[v];
    if speed > 0.0 {
        x.right.max(0.0) / speed
    } else {
        x.left.max(0.0) / -speed
    }
}

fn local(spec: &NrwSlabSpec, delta: f64, x: &NrwState) -> Local {
    let region = spec.region_at(x.left);
    let kappa = exit_time(spec, x, x.v);
    let h = phi(kappa, delta);
    let alpha = region.alpha[x.v];
    let row = &region.kernel[x.v];
    let weighted: f64 = row
        .iter()
        .enumerate()
        .map(|(j, p)| {
            if *p > 0.0 {
                p * phi(exit_time(spec, x, j), delta)
            } else {
                0.0
            }
        })
        .sum();
    let lh = -phi_prime(kappa, delta) + alpha * (weighted - h);
    Local {
        scatter: alpha * weighted / h,
        lh_over_h: lh / h,
    }
}

/// `Lh / h` at position `r` with velocity index `v`.
pub fn nrw_lh_over_h(spec: &NrwSlabSpec, r: f64, v: usize) -> f64 {
    let x = NrwState {
        left: r,
        right: spec.length - r,
        v,
    };
    local(spec, spec.delta(), &x).lh_over_h
}

/// The h-transformed walk with branching and killing.
#[derive(Debug, Clone)]
pub struct Nrw {
    spec: NrwSlabSpec,
    delta: f64,
    alpha_max: f64,
}

pub fn nrw_make(spec: NrwSlabSpec) -> Result<Nrw, ModelError> {
    spec.validate()?;
    Ok(Nrw {
        delta: spec.delta(),
        alpha_max: spec.alpha_max(),
        spec,
    })
}

impl Nrw {
    pub fn spec(&self) -> &NrwSlabSpec {
        &self.spec
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Interior state at position `r` with velocity index `v`.
    pub fn state(&self, r: f64, v: usize) -> Result<NrwState, ModelError> {
        if !(r > 0.0 && r < self.spec.length) {
            return Err(ModelError::Parameter { name: "r", value: r });
        }
        if v >= self.spec.velocities.len() {
            return Err(ModelError::Parameter {
                name: "velocity index",
                value: v as f64,
            });
        }
        Ok(NrwState {
            left: r,
            right: self.spec.length - r,
            v,
        })
    }

    pub fn exit_time(&self, x: &NrwState) -> f64 {
        exit_time(&self.spec, x, x.v)
    }

    /// `h(r, v') = phi(kappa(r, v'))`.
    pub fn h(&self, x: &NrwState, v: usize) -> f64 {
        phi(exit_time(&self.spec, x, v), self.delta)
    }

    pub fn lh_over_h(&self, x: &NrwState) -> f64 {
        local(&self.spec, self.delta, x).lh_over_h
    }

    /// Rate of the transformed scatter mechanism, self-scatter included.
    pub fn scatter_rate(&self, x: &NrwState) -> f64 {
        local(&self.spec, self.delta, x).scatter
    }

    /// Normalised law of the velocity after a scatter at `x`.
    pub fn scatter_law(&self, x: &NrwState) -> Vec<f64> {
        let row = &self.spec.region_at(x.left).kernel[x.v];
        let w: Vec<f64> = row.iter().enumerate().map(|(j, p)| p * self.h(x, j)).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|v| v / total).collect()
    }

    fn scatter<R: Rng + ?Sized>(&self, x: &NrwState, rng: &mut R) -> NrwState {
        let row = &self.spec.region_at(x.left).kernel[x.v];
        let w: Vec<f64> = row.iter().enumerate().map(|(j, p)| p * self.h(x, j)).collect();
        let v = weighted_index(rng, &w).unwrap_or(x.v);
        NrwState { v, ..*x }
    }

    fn min_h(&self, x: &NrwState, horizon: f64) -> f64 {
        phi(self.exit_time(x) - horizon, self.delta)
    }

    fn flow_to(&self, x: &NrwState, dt: f64) -> NrwState {
        let speed = self.spec.velocities[x.v];
        let dist = speed.abs() * dt;
        let mut y = *x;
        if speed > 0.0 {
            if dist >= x.right {
                y.right = 0.0;
                y.left = self.spec.length;
            } else {
                y.left += dist;
                y.right -= dist;
            }
        } else if dist >= x.left {
            y.left = 0.0;
            y.right = self.spec.length;
        } else {
            y.left -= dist;
            y.right += dist;
        }
        y
    }

    fn lookahead_from(&self, x: &NrwState) -> f64 {
        let kappa = self.exit_time(x);
        if kappa >= 2.0 * self.delta {
            kappa - self.delta
        } else {
            0.5 * kappa
        }
    }
}

impl FlowModel for Nrw {
    type State = NrwState;

    fn flow(&self, x: &NrwState, dt: f64) -> NrwState {
        self.flow_to(x, dt)
    }

    fn boundary_hit_time(&self, x: &NrwState) -> f64 {
        self.exit_time(x)
    }

    fn is_absorbed(&self, x: &NrwState) -> bool {
        x.left <= 0.0 || x.right <= 0.0
    }

    fn event_rate(&self, x: &NrwState) -> f64 {
        let l = local(&self.spec, self.delta, x);
        l.scatter + l.lh_over_h.abs()
    }

    fn rate_bound(&self, x: &NrwState, horizon: f64) -> f64 {
        let hmin = self.min_h(x, horizon);
        if hmin <= 0.0 {
            return f64::INFINITY;
        }
        let ad = self.alpha_max * self.delta;
        (2.0 * ad + PHI_SLOPE_MAX) / hmin
    }

    fn lookahead(&self, x: &NrwState) -> f64 {
        self.lookahead_from(x)
    }

    fn sample_event<R: Rng + ?Sized>(&self, x: &NrwState, rng: &mut R) -> FlowEvent<NrwState> {
        let l = local(&self.spec, self.delta, x);
        let b = l.lh_over_h.max(0.0);
        let k = (-l.lh_over_h).max(0.0);
        let u = uniform(rng) * (l.scatter + b + k);
        if u < l.scatter {
            FlowEvent::Jump(self.scatter(x, rng))
        } else if u < l.scatter + b || k == 0.0 {
            FlowEvent::Branch
        } else {
            FlowEvent::Kill
        }
    }

    fn branch_rate(&self, x: &NrwState) -> f64 {
        self.lh_over_h(x).max(0.0)
    }

    fn kill_rate(&self, x: &NrwState) -> f64 {
        (-self.lh_over_h(x)).max(0.0)
    }

    /// `Lh <= alpha delta` and `Lh > 0` only where `h >= delta/2`.
    fn branch_bound(&self) -> Option<f64> {
        Some(2.0 * self.alpha_max)
    }
}

/// The transformed walk without branching or killing.
#[derive(Debug, Clone)]
pub struct NrwMotion(pub Nrw);

impl FlowModel for NrwMotion {
    type State = NrwState;

    fn flow(&self, x: &NrwState, dt: f64) -> NrwState {
        self.0.flow_to(x, dt)
    }

    fn boundary_hit_time(&self, x: &NrwState) -> f64 {
        self.0.exit_time(x)
    }

    fn is_absorbed(&self, x: &NrwState) -> bool {
        self.0.is_absorbed(x)
    }

    fn event_rate(&self, x: &NrwState) -> f64 {
        self.0.scatter_rate(x)
    }

    fn rate_bound(&self, x: &NrwState, horizon: f64) -> f64 {
        let hmin = self.0.min_h(x, horizon);
        if hmin <= 0.0 {
            return f64::INFINITY;
        }
        self.0.alpha_max * self.0.delta / hmin
    }

    fn lookahead(&self, x: &NrwState) -> f64 {
        self.0.lookahead_from(x)
    }

    fn sample_event<R: Rng + ?Sized>(&self, x: &NrwState, rng: &mut R) -> FlowEvent<NrwState> {
        FlowEvent::Jump(self.0.scatter(x, rng))
    }

    fn branch_rate(&self, _x: &NrwState) -> f64 {
        0.0
    }

    fn kill_rate(&self, _x: &NrwState) -> f64 {
        0.0
    }

    fn branch_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_is_c1_and_monotone() {
        let d = 0.5;
        assert_eq!(phi(0.1, d), 0.1);
        assert_eq!(phi(0.9, d), d);
        let eps = 1e-9;
        for &x in &[0.25, 0.5] {
            assert!((phi(x + eps, d) - phi(x - eps, d)).abs() < 3.0 * eps * phi_prime(x, d).max(1e-3));
        }
        let mut prev = 0.0;
        for i in 0..=1000 {
            let x = i as f64 * 1e-3;
            let y = phi(x, d);
            assert!(y >= prev);
            assert!(phi_prime(x, d) <= PHI_SLOPE_MAX + 1e-12);
            prev = y;
        }
    }

    #[test]
    fn plateau_has_no_potential() {
        let spec = NrwSlabSpec::preset();
        let m = nrw_make(spec.clone()).unwrap();
        for v in 0..4 {
            assert_eq!(nrw_lh_over_h(&spec, 2.0, v), 0.0);
            let x = m.state(2.0, v).unwrap();
            assert_eq!(m.branch_rate(&x), 0.0);
            assert_eq!(m.kill_rate(&x), 0.0);
        }
    }

    #[test]
    fn single_velocity_linear_region() {
        let spec = NrwSlabSpec::uniform(1.0, vec![1.0], 1.0);
        let m = nrw_make(spec.clone()).unwrap();
        let x = m.state(0.9, 0).unwrap();
        let kappa = m.exit_time(&x);
        assert!((m.h(&x, 0) - kappa).abs() < 1e-15);
        assert!((nrw_lh_over_h(&spec, 0.9, 0) + 1.0 / kappa).abs() < 1e-9);
    }

    #[test]
    fn near_boundary_kills() {
        let spec = NrwSlabSpec::preset();
        let m = nrw_make(spec).unwrap();
        let d = m.delta();
        for &r in &[3.99, 3.9, 3.7 + 0.05] {
            let x = m.state(r, 3).unwrap();
            let kappa = m.exit_time(&x);
            if kappa <= d / 2.0 {
                let lh = m.lh_over_h(&x) * m.h(&x, 3);
                assert!(lh <= -0.5 + 1e-12);
                assert!(m.kill_rate(&x) >= 1.0 / (2.0 * m.h(&x, 3)) - 1e-9);
            }
        }
    }

    #[test]
    fn flow_reaches_the_wall_exactly() {
        let m = nrw_make(NrwSlabSpec::preset()).unwrap();
        let x = m.state(3.0, 3).unwrap();
        let y = m.flow(&x, m.boundary_hit_time(&x));
        assert!(m.is_absorbed(&y));
        let z = m.flow(&x, 0.5 * m.boundary_hit_time(&x));
        assert!(!m.is_absorbed(&z));
        assert!((z.left + z.right - 4.0).abs() < 1e-12);
    }

    #[test]
    fn bound_dominates_rate_along_segment() {
        let m = nrw_make(NrwSlabSpec::preset()).unwrap();
        for i in 1..400 {
            let r = i as f64 * 0.01;
            for v in 0..4 {
                let x = m.state(r, v).unwrap();
                let horizon = m.lookahead(&x);
                let bound = m.rate_bound(&x, horizon);
                for k in 0..=20 {
                    let y = m.flow(&x, horizon * k as f64 / 20.0);
                    assert!(m.event_rate(&y) <= bound * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn rejects_bad_velocities() {
        let mut spec = NrwSlabSpec::preset();
        spec.velocities[0] = 0.0;
        assert_eq!(nrw_make(spec).unwrap_err(), ModelError::Velocity(0.0));
        let mut spec = NrwSlabSpec::preset();
        spec.velocities[0] = -9.0;
        assert!(nrw_make(spec).is_err());
        let mut spec = NrwSlabSpec::preset();
        spec.regions[0].kernel[1][0] = 0.5;
        assert!(matches!(nrw_make(spec), Err(ModelError::Kernel { row: 1, .. })));
    }
}
