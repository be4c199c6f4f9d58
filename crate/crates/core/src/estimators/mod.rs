//! Monte Carlo and multilevel Monte Carlo estimators over coupled sample
//! pools.

mod pool;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::plan::Plan;

pub use pool::{
    run_samples, CorrectionSample, PoolStore, Provenance, SampleKind, SampleModel, SamplePool,
};

pub fn mc_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(invalid("mean of an empty sample"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Unbiased sample variance with `1 / (N - 1)` normalization.
pub fn sample_variance(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(invalid("variance needs at least two values"));
    }
    let m = mc_mean(values)?;
    Ok(values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statistic {
    Mean,
    Variance,
}

impl Statistic {
    fn apply(self, v: &[f64]) -> Result<f64> {
        match self {
            Statistic::Mean => mc_mean(v),
            Statistic::Variance => sample_variance(v),
        }
    }
}

/// Default bootstrap resample count.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Percentile bootstrap interval of `statistic` with the given coverage.
pub fn bootstrap_ci(
    values: &[f64],
    statistic: Statistic,
    resamples: usize,
    coverage: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(invalid("bootstrap needs at least two values"));
    }
    if resamples < 100 {
        return Err(invalid("bootstrap needs at least 100 resamples"));
    }
    if !(coverage > 0.0 && coverage < 1.0) {
        return Err(invalid("coverage must lie in (0, 1)"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("bootstrap input has non-finite values"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = values.len();
    let mut buf = vec![0.0; n];
    let mut stats = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        for b in buf.iter_mut() {
            *b = values[rng.random_range(0..n)];
        }
        stats.push(statistic.apply(&buf)?);
    }
    stats.sort_by(f64::total_cmp);
    let alpha = 0.5 * (1.0 - coverage);
    Ok((quantile_sorted(&stats, alpha), quantile_sorted(&stats, 1.0 - alpha)))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let k = h.floor() as usize;
    if k + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    let w = h - k as f64;
    if w == 0.0 {
        sorted[k]
    } else {
        sorted[k] + w * (sorted[k + 1] - sorted[k])
    }
}

/// Per-level values an estimate is built from: fine values at the base
/// level and corrections above it, first `N_l` by sample index.
pub fn plan_values(pool: &SamplePool, plan: &Plan) -> Result<Vec<Vec<f64>>> {
    plan.levels()
        .zip(&plan.samples)
        .map(|(l, &n)| {
            if l == plan.l0 {
                pool.fine_values(l, n as usize)
            } else {
                pool.corrections(l, n as usize)
            }
        })
        .collect()
}

/// `mean(Q_l0) + sum_{l > l0} mean(Q_l - Q_{l-1})`.
pub fn mlmc_estimate(pool: &SamplePool, plan: &Plan) -> Result<f64> {
    plan_values(pool, plan)?.iter().map(|v| mc_mean(v)).sum()
}

/// `sum_l Var_l / N_l` with the base term taken over fine values.
pub fn mlmc_estimator_variance(pool: &SamplePool, plan: &Plan) -> Result<f64> {
    plan_values(pool, plan)?
        .iter()
        .map(|v| Ok(sample_variance(v)? / v.len() as f64))
        .sum()
}

/// Measured cost of the samples an estimate uses, in seconds.
pub fn plan_work(pool: &SamplePool, plan: &Plan) -> Result<f64> {
    let mut total = 0.0;
    for (l, &n) in plan.levels().zip(&plan.samples) {
        // The base level only pays for the fine evaluation.
        total += if l == plan.l0 {
            pool.first_samples(l, n as usize, false)?.iter().map(|s| s.fine_work).sum::<f64>()
        } else {
            pool.first_samples(l, n as usize, true)?.iter().map(|s| s.work).sum::<f64>()
        };
    }
    Ok(total)
}

/// Checks that an error is an insufficient-sample report.
pub fn is_insufficient(e: &Error) -> bool {
    matches!(e, Error::InsufficientSamples { .. })
}
