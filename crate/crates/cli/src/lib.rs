//! Command-line driver for multilevel Monte Carlo studies of seismic
//! misfit functionals.

pub mod commands;
pub mod config;
pub mod report;

pub use config::RunConfig;
