//! Spatial neutral-to-the-right (NTR) processes.
//!
//! The crate provides the calculus around NTR priors on time-and-mark data:
//! jump-law families with their Lévy-exponent functionals, exact
//! exchangeable-partition probabilities and their ordered variants, the
//! ordered Chinese-restaurant sampler, marginal dataset simulation,
//! posterior survival and hazard estimation, and a suite of closed-form
//! identities used to cross-validate every stochastic component.

pub mod error;
pub mod families;
pub mod partition;
pub mod quad;
pub mod special;

pub use error::{Error, Result};
pub use families::{
    DensityFn, DensitySide, FamilySpec, FunctionalTable, JumpLawFamily, LevyFunctionals,
    OneSidedDensity, ScheduleFunction,
};
pub use partition::{OrderedPartition, SetPartition};
