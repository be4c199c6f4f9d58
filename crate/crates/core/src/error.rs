use thiserror::Error;

use crate::rng::SampleKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("time step {dt:.4e} s violates the stability bound {bound:.4e} s at level {level}")]
    Unstable { level: u32, dt: f64, bound: f64 },

    #[error("non-finite wavefield at step {step} of level {level}")]
    BlowUp { level: u32, step: usize },

    #[error("observation times are not contained in the simulation grid: {0}")]
    GridMismatch(String),

    #[error("SLS fit misses the target Q by {max_rel_err:.3} (allowed {allowed}) in the band")]
    SlsFit { max_rel_err: f64, allowed: f64 },

    #[error("not enough samples at level {level}: have {have}, need {need}")]
    InsufficientSamples { level: u32, have: usize, need: usize },

    #[error("no hierarchy meets tolerance {tol:.4e}; smallest achievable bias is {best_bias:.4e}")]
    Infeasible { tol: f64, best_bias: f64 },

    #[error("forward model failed for sample {key}: {source}")]
    Sample {
        key: SampleKey,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
