//! Exact Feynman-Kac semigroup of finite-state jump models.
//!
//! For a model with motion generator `L`, branching rate `b` and killing rate
//! `kappa`, the tilted generator is `A = L + diag(b - kappa)` restricted to
//! the non-absorbed states; jumps into absorbed states leak mass. `e^{tA} f`
//! is the expected weighted occupation `E_x[f(X_t) exp(int (b - kappa))]`.

use std::collections::{HashMap, VecDeque};
use std::hash::Hash;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::JumpModel;

/// Largest state space accepted by the dense oracle.
pub const MAX_STATES: usize = 20_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("state space of size {0} exceeds the oracle limit")]
    TooLarge(usize),
    #[error("state space is empty")]
    Empty,
    #[error("model does not enumerate its motion transitions")]
    NotEnumerable,
    #[error("transition leaves the enumeration from state {0}")]
    OutsideEnumeration(String),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("vector length {got} does not match {expected} states")]
    Length { expected: usize, got: usize },
    #[error("leading eigentriple did not converge (residual {residual})")]
    NonConvergence { residual: f64 },
}

/// Dense tilted generator over an explicit enumeration.
#[derive(Debug, Clone)]
pub struct TiltedGenerator<S> {
    states: Vec<S>,
    index: HashMap<S, usize>,
    matrix: DMatrix<f64>,
}

impl<S: Clone + Eq + Hash> TiltedGenerator<S> {
    /// Wraps a matrix over the given states.
    pub fn from_matrix(states: Vec<S>, matrix: DMatrix<f64>) -> Result<Self, OracleError> {
        if states.is_empty() {
            return Err(OracleError::Empty);
        }
        if matrix.nrows() != states.len() || matrix.ncols() != states.len() {
            return Err(OracleError::Length {
                expected: states.len(),
                got: matrix.nrows(),
            });
        }
        let index = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Ok(Self { states, index, matrix })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn index_of(&self, s: &S) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `f` evaluated on the enumeration.
    pub fn vector<F: Fn(&S) -> f64 + ?Sized>(&self, f: &F) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.states.iter().map(f))
    }

    /// `A - shift I`, e.g. to compare tilts that differ by a constant.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut g = self.clone();
        for i in 0..g.len() {
            g.matrix[(i, i)] -= shift;
        }
        g
    }
}

/// Builds the tilted generator of `model` over `states`, dropping absorbed
/// states. Every non-absorbed motion target must be in `states`.
pub fn tilted_generator<M>(
    model: &M,
    states: &[M::State],
    env: &M::Env,
) -> Result<TiltedGenerator<M::State>, OracleError>
where
    M: JumpModel,
    M::State: Eq + Hash,
{
    let kept: Vec<M::State> = states.iter().filter(|s| !model.is_absorbed(s)).cloned().collect();
    if kept.is_empty() {
        return Err(OracleError::Empty);
    }
    if kept.len() > MAX_STATES {
        return Err(OracleError::TooLarge(kept.len()));
    }
    let index: HashMap<M::State, usize> = kept.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let n = kept.len();
    let mut a = DMatrix::zeros(n, n);
    for (i, x) in kept.iter().enumerate() {
        let targets = model.motion_targets(x, env).ok_or(OracleError::NotEnumerable)?;
        let mut exit = 0.0;
        for (y, rate) in targets {
            if rate == 0.0 || y == *x {
                continue;
            }
            exit += rate;
            if model.is_absorbed(&y) {
                continue;
            }
            let j = *index
                .get(&y)
                .ok_or_else(|| OracleError::OutsideEnumeration(format!("{x:?}")))?;
            a[(i, j)] += rate;
        }
        a[(i, i)] += -exit + model.branch_rate(x, env) - model.kill_rate(x, env);
    }
    TiltedGenerator::from_matrix(kept, a)
}

/// States reachable from `start` by motion, sorted. Fails if more than
/// `limit` states are found.
pub fn reachable_states<M>(
    model: &M,
    start: &[M::State],
    env: &M::Env,
    limit: usize,
) -> Result<Vec<M::State>, OracleError>
where
    M: JumpModel,
    M::State: Eq + Hash + Ord,
{
    let mut seen: HashMap<M::State, ()> = HashMap::new();
    let mut queue: VecDeque<M::State> = start.iter().cloned().collect();
    for s in start {
        seen.insert(s.clone(), ());
    }
    while let Some(x) = queue.pop_front() {
        if model.is_absorbed(&x) {
            continue;
        }
        for (y, rate) in model.motion_targets(&x, env).ok_or(OracleError::NotEnumerable)? {
            if rate > 0.0 && !seen.contains_key(&y) {
                if seen.len() >= limit {
                    return Err(OracleError::TooLarge(seen.len() + 1));
                }
                seen.insert(y.clone(), ());
                queue.push_back(y);
            }
        }
    }
    let mut states: Vec<M::State> = seen.into_keys().collect();
    states.sort();
    Ok(states)
}

/// Uniformization data: `e^{tA} = e^{shift t} sum_k Pois(k; rate t) P^k`
/// with `P = (A + c I) / rate` entrywise nonnegative and substochastic.
struct Uniformized {
    p: DMatrix<f64>,
    rate: f64,
    shift: f64,
}

fn uniformize(a: &DMatrix<f64>) -> Uniformized {
    let n = a.nrows();
    let c = (0..n).map(|i| (-a[(i, i)]).max(0.0)).fold(0.0, f64::max);
    let mut b = a.clone();
    for i in 0..n {
        b[(i, i)] += c;
    }
    let row_max = (0..n)
        .map(|i| b.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let rate = row_max.max(1e-300);
    Uniformized {
        p: b / rate,
        rate,
        shift: rate - c,
    }
}

/// Poisson(`mean`) weights up to a tail below `1e-17` relative to the mode.
fn poisson_weights(mean: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut log_w = -mean;
    let mut k = 0usize;
    loop {
        let w = log_w.exp();
        out.push(w);
        let kf = k as f64;
        if kf > mean && w * (kf + 1.0) / (kf + 1.0 - mean) < 1e-17 {
            break;
        }
        k += 1;
        log_w += mean.ln() - (k as f64).ln();
        if mean == 0.0 {
            break;
        }
    }
    out
}

fn apply_series(u: &Uniformized, f: &DVector<f64>, t: f64, transpose: bool) -> DVector<f64> {
    if t == 0.0 {
        return f.clone();
    }
    let weights = poisson_weights(u.rate * t);
    let pt;
    let p = if transpose {
        pt = u.p.transpose();
        &pt
    } else {
        &u.p
    };
    let mut term = f.clone();
    let mut acc = DVector::zeros(f.len());
    for (k, w) in weights.iter().enumerate() {
        if k > 0 {
            term = p * &term;
        }
        if *w > 0.0 {
            acc.axpy(*w, &term, 1.0);
        }
    }
    acc * (u.shift * t).exp()
}

/// `e^{tA} f` by uniformization.
pub fn semigroup_apply<S>(g: &TiltedGenerator<S>, f: &DVector<f64>, t: f64) -> Result<DVector<f64>, OracleError> {
    check_apply(g.matrix.nrows(), f, t)?;
    Ok(apply_series(&uniformize(&g.matrix), f, t, false))
}

/// `mu e^{tA}` as a column vector.
pub fn semigroup_apply_left<S>(g: &TiltedGenerator<S>, mu: &DVector<f64>, t: f64) -> Result<DVector<f64>, OracleError> {
    check_apply(g.matrix.nrows(), mu, t)?;
    Ok(apply_series(&uniformize(&g.matrix), mu, t, true))
}

fn check_apply(n: usize, f: &DVector<f64>, t: f64) -> Result<(), OracleError> {
    if !(t >= 0.0) {
        return Err(OracleError::NegativeTime(t));
    }
    if f.len() != n {
        return Err(OracleError::Length {
            expected: n,
            got: f.len(),
        });
    }
    Ok(())
}

/// Growth rate with right eigenfunction (sup-normalised) and left
/// eigenmeasure (mass-normalised).
#[derive(Debug, Clone, PartialEq)]
pub struct LeadingTriple {
    pub lambda: f64,
    pub eta: DVector<f64>,
    pub nu: DVector<f64>,
}

impl LeadingTriple {
    /// `nu(f)`.
    pub fn nu_of(&self, f: &DVector<f64>) -> f64 {
        self.nu.dot(f)
    }

    /// `max(|A eta - lambda eta|, |nu A - lambda nu|)`.
    pub fn residual(&self, a: &DMatrix<f64>) -> f64 {
        let right = a * &self.eta - &self.eta * self.lambda;
        let left = a.tr_mul(&self.nu) - &self.nu * self.lambda;
        right.amax().max(left.amax())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleConfig {
    pub max_squarings: u32,
    pub max_polish: u32,
    /// Residual target; scaled up for matrices with large entries.
    pub tolerance: f64,
}

impl Default for TripleConfig {
    fn default() -> Self {
        Self {
            max_squarings: 80,
            max_polish: 10_000,
            tolerance: 1e-10,
        }
    }
}

fn normalize_sup(v: &mut DVector<f64>) {
    let m = v.amax();
    if m > 0.0 {
        *v /= m;
    }
}

fn normalize_mass(v: &mut DVector<f64>) {
    let s = v.sum();
    if s != 0.0 {
        *v /= s;
    }
}

fn rayleigh(a: &DMatrix<f64>, eta: &DVector<f64>, nu: &DVector<f64>) -> f64 {
    nu.dot(&(a * eta)) / nu.dot(eta)
}

/// Leading eigentriple by power iteration on `e^{A dt}`, accelerated by
/// repeated squaring of the propagator.
pub fn leading_triple<S>(g: &TiltedGenerator<S>) -> Result<LeadingTriple, OracleError> {
    leading_triple_with(g, &TripleConfig::default())
}

pub fn leading_triple_with<S>(g: &TiltedGenerator<S>, config: &TripleConfig) -> Result<LeadingTriple, OracleError> {
    let a = &g.matrix;
    let n = a.nrows();
    if n == 1 {
        return Ok(LeadingTriple {
            lambda: a[(0, 0)],
            eta: DVector::from_element(1, 1.0),
            nu: DVector::from_element(1, 1.0),
        });
    }
    let norm = (0..n)
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let tolerance = config.tolerance.max(1e3 * f64::EPSILON * norm);
    let diag_max = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(1e-12);
    let dt = 0.5 / diag_max;

    // Propagator over one step, by uniformization applied to the identity.
    let u = uniformize(a);
    let weights = poisson_weights(u.rate * dt);
    let mut step = DMatrix::zeros(n, n);
    let mut term = DMatrix::identity(n, n);
    for (k, w) in weights.iter().enumerate() {
        if k > 0 {
            term = &u.p * &term;
        }
        step += &term * *w;
    }
    let step_max = step.amax();
    step /= step_max;

    let mut prop = step.clone();
    let mut eta = DVector::from_element(n, 1.0);
    let mut nu = DVector::from_element(n, 1.0 / n as f64);
    let mut stable = 0;
    for _ in 0..config.max_squarings {
        prop = &prop * &prop;
        let m = prop.amax();
        if !(m > 0.0 && m.is_finite()) {
            break;
        }
        prop /= m;
        let mut new_eta = &prop * DVector::from_element(n, 1.0);
        let mut new_nu = prop.tr_mul(&DVector::from_element(n, 1.0));
        normalize_sup(&mut new_eta);
        normalize_mass(&mut new_nu);
        let change = (&new_eta - &eta).amax().max((&new_nu - &nu).amax());
        eta = new_eta;
        nu = new_nu;
        if change < 1e-15 {
            stable += 1;
            if stable >= 2 {
                break;
            }
        } else {
            stable = 0;
        }
    }

    let mut triple = LeadingTriple {
        lambda: rayleigh(a, &eta, &nu),
        eta,
        nu,
    };
    let mut residual = triple.residual(a);
    let mut iterations = 0;
    while residual > tolerance && iterations < config.max_polish {
        triple.eta = &step * &triple.eta;
        normalize_sup(&mut triple.eta);
        triple.nu = step.tr_mul(&triple.nu);
        normalize_mass(&mut triple.nu);
        triple.lambda = rayleigh(a, &triple.eta, &triple.nu);
        residual = triple.residual(a);
        iterations += 1;
    }
    if residual > tolerance || triple.eta.iter().any(|v| !(*v > 0.0)) || triple.nu.iter().any(|v| *v < 0.0) {
        return Err(OracleError::NonConvergence { residual });
    }
    Ok(triple)
}

/// Cross-check by dense eigendecomposition: the eigenvalue of largest real
/// part and SVD null vectors of `A - lambda I` and its transpose.
pub fn leading_triple_dense<S>(g: &TiltedGenerator<S>) -> Result<LeadingTriple, OracleError> {
    let a = &g.matrix;
    let n = a.nrows();
    let lambda = a
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let shifted = a - DMatrix::identity(n, n) * lambda;
    let null = |m: DMatrix<f64>| -> DVector<f64> {
        let svd = m.svd(false, true);
        let v_t = svd.v_t.expect("requested");
        let k = svd.singular_values.imin();
        let mut v: DVector<f64> = v_t.row(k).transpose();
        if v.sum() < 0.0 {
            v = -v;
        }
        v
    };
    let mut eta = null(shifted.clone());
    let mut nu = null(shifted.transpose());
    normalize_sup(&mut eta);
    normalize_mass(&mut nu);
    let triple = LeadingTriple { lambda, eta, nu };
    let residual = triple.residual(a);
    if !residual.is_finite() {
        return Err(OracleError::NonConvergence { residual });
    }
    Ok(triple)
}
