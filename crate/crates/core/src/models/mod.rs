//! Concrete model families.

pub mod birth_death;
pub mod brw;
pub mod nrw;

use thiserror::Error;

pub use birth_death::{
    bd_killed_make, bd_make, benchmark, BdState, BirthDeath, BirthDeathSpec, Boundary, Piece, PiecewisePoly,
};
pub use brw::{brw_make, brw_shared_make, Brw, BrwShared, BrwSpec, BrwState, Regime};
pub use nrw::{nrw_lh_over_h, nrw_make, phi, phi_prime, Nrw, NrwMotion, NrwSlabSpec, NrwState, Region};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("death rate of coordinate {coord} is {rate} at the lower boundary")]
    DeathAtFloor { coord: usize, rate: f64 },
    #[error("state cap must be at least {min}, got {got}")]
    CapTooSmall { min: u32, got: u32 },
    #[error("this model requires a finite state cap")]
    InfiniteCap,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid velocity {0}: must be nonzero and inside the annulus")]
    Velocity(f64),
    #[error("invalid parameter {name} = {value}")]
    Parameter { name: &'static str, value: f64 },
    #[error("scatter kernel row {row} sums to {sum}")]
    Kernel { row: usize, sum: f64 },
}
