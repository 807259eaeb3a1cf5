#![allow(dead_code)]

use bbmmi_core::model::{FlowEvent, FlowModel, JumpModel};
use rand::Rng;

/// Constant rates; a motion jump adds one to the state.
#[derive(Debug, Clone)]
pub struct Const {
    pub motion: f64,
    pub branch: f64,
    pub kill: f64,
}

impl JumpModel for Const {
    type State = u32;
    type Env = ();

    fn motion_rate(&self, _x: &u32, _env: &()) -> f64 {
        self.motion
    }

    fn sample_motion<R: Rng + ?Sized>(&self, x: &u32, _env: &(), _rng: &mut R) -> u32 {
        x + 1
    }

    fn branch_rate(&self, _x: &u32, _env: &()) -> f64 {
        self.branch
    }

    fn kill_rate(&self, _x: &u32, _env: &()) -> f64 {
        self.kill
    }

    fn branch_bound(&self) -> Option<f64> {
        Some(self.branch)
    }
}

/// Unit drift to the right on `(0, 1)`, absorbed at 1, no other events.
#[derive(Debug, Clone)]
pub struct Drift;

impl FlowModel for Drift {
    type State = f64;

    fn flow(&self, x: &f64, dt: f64) -> f64 {
        (x + dt).min(1.0)
    }

    fn boundary_hit_time(&self, x: &f64) -> f64 {
        (1.0 - x).max(0.0)
    }

    fn is_absorbed(&self, x: &f64) -> bool {
        *x >= 1.0
    }

    fn event_rate(&self, _x: &f64) -> f64 {
        0.0
    }

    fn rate_bound(&self, _x: &f64, _horizon: f64) -> f64 {
        0.0
    }

    fn lookahead(&self, x: &f64) -> f64 {
        self.boundary_hit_time(x)
    }

    fn sample_event<R: Rng + ?Sized>(&self, _x: &f64, _rng: &mut R) -> FlowEvent<f64> {
        FlowEvent::Kill
    }

    fn branch_rate(&self, _x: &f64) -> f64 {
        0.0
    }

    fn kill_rate(&self, _x: &f64) -> f64 {
        0.0
    }

    fn branch_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Asymptotic Kolmogorov-Smirnov p-value for statistic `d` from `n` draws.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    let mut sum = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-14 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// KS statistic of `samples` against the continuous CDF `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((((i + 1) as f64) / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// `|observed/n - p| <= 3 sigma` for a binomial count.
pub fn within_three_sigma(count: u64, n: u64, p: f64) -> bool {
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    ((count as f64 / n as f64) - p).abs() <= 3.0 * sigma
}
