//! Branching particle systems with Moran-type interactions.
//!
//! The engine simulates a population of particles moving as independent
//! copies of a Markov process, branching at rate `b` and dying at rate
//! `kappa`, with optional resampling and selection that keep the population
//! size controlled. Log weights make the weighted occupation measure an
//! unbiased estimator of the Feynman-Kac semigroup, which the [`oracle`]
//! module computes exactly on finite state spaces.

pub mod clock;
pub mod engine;
pub mod estimators;
pub mod model;
pub mod models;
pub mod oracle;
pub mod rng;
pub mod stats;
