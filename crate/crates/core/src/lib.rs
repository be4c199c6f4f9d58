//! Multilevel Monte Carlo estimation of seismic misfit functionals.
//!
//! The crate is organised bottom-up:
//!
//! * [`medium`] draws random layered Earth models,
//! * [`solver`] propagates 2-D P-SV viscoelastic waves through a draw on a
//!   level-parameterised staggered grid and records seismograms,
//! * [`qoi`] turns seismograms into scalar misfits against reference data
//!   (L² misfit and quadratic Wasserstein misfit),
//! * [`data`] builds synthetic reference data,
//! * [`estimators`] holds coupled sample pools and MC / MLMC estimators,
//! * [`calibrate`] fits work, bias and variance models from a verification
//!   pool and [`plan`] turns them into optimal hierarchies.
//!
//! [`surrogate`] is a cheap forward model with closed-form moments used to
//! check the estimator and planning stack independently of the solver.

pub mod calibrate;
pub mod data;
pub mod estimators;
pub mod medium;
pub mod model;
pub mod plan;
pub mod presets;
pub mod qoi;
pub mod rng;
pub mod solver;
pub mod surrogate;

mod error;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/media.md")]
    mod media {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/misfits.md")]
    mod misfits {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/planning.md")]
    mod planning {}
    #[doc = include_str!("../../../book/src/studies.md")]
    mod studies {}
}
