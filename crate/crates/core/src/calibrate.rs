//! Work, bias and variance models fitted from a verification pool.
//!
//! Rates (`gamma`, `q_w`, `q_s`) are configured; the pool supplies
//! per-level anchors, each the upper end of a bootstrap interval, and
//! models extrapolate geometrically beyond the top verification level.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{
    bootstrap_ci, mc_mean, run_samples, sample_variance, PoolStore, SampleKind, SampleModel,
    SamplePool, Statistic, BOOTSTRAP_RESAMPLES,
};
use crate::plan::LevelModels;
use crate::rng::derive_run;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub gamma: f64,
    pub q_w: f64,
    pub q_s: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self { gamma: 3.0, q_w: 2.0, q_s: 4.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bootstrap {
    pub resamples: usize,
    pub coverage: f64,
    pub seed: u64,
}

impl Default for Bootstrap {
    fn default() -> Self {
        Self { resamples: BOOTSTRAP_RESAMPLES, coverage: 0.95, seed: 0x5eed }
    }
}

/// Sample statistics of one verification level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelDiagnostics {
    pub level: u32,
    pub samples: usize,
    pub mean: f64,
    pub mean_ci: (f64, f64),
    pub variance: f64,
    pub variance_ci: (f64, f64),
    /// Statistics of `Q_l - Q_{l-1}`; absent at level 0.
    pub correction: Option<CorrectionDiagnostics>,
    pub work: f64,
    pub base_work: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionDiagnostics {
    pub mean: f64,
    pub mean_ci: (f64, f64),
    pub variance: f64,
    pub variance_ci: (f64, f64),
}

/// Rates estimated by log-linear regression over the verification levels;
/// reported only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredRates {
    pub gamma: f64,
    pub q_w: f64,
    pub q_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateModels {
    pub rates: Rates,
    pub l_ver: u32,
    /// Mean cost per sample at levels `0..=l_ver` (coupled above level 0).
    pub work: Vec<f64>,
    /// Mean cost of the fine evaluation alone at levels `0..=l_ver`.
    pub base_work: Vec<f64>,
    /// `max(|lo|, |hi|)` of the bootstrap interval of `mean(Q_l - Q_{l-1})`,
    /// entry `l - 1` for `l = 1..=l_ver`.
    pub bias_anchor: Vec<f64>,
    /// Upper bootstrap end of `Var(Q_l)`, `l = 0..=l_ver`.
    pub base_variance: Vec<f64>,
    /// Upper bootstrap end of `Var(Q_l - Q_{l-1})`, entry `l - 1`.
    pub correction_variance: Vec<f64>,
    pub diagnostics: Vec<LevelDiagnostics>,
    pub measured: MeasuredRates,
    pub config_digest: String,
}

impl RateModels {
    pub fn validate(&self) -> Result<()> {
        let l = self.l_ver as usize;
        if l == 0 {
            return Err(invalid("verification needs at least two levels"));
        }
        if self.work.len() != l + 1
            || self.base_work.len() != l + 1
            || self.base_variance.len() != l + 1
            || self.bias_anchor.len() != l
            || self.correction_variance.len() != l
        {
            return Err(invalid("rate model anchors do not match the verification levels"));
        }
        Ok(())
    }

    pub fn model_work(&self, level: u32) -> f64 {
        extrapolate(&self.work, self.l_ver, level, self.rates.gamma)
    }

    pub fn model_base_work(&self, level: u32) -> f64 {
        extrapolate(&self.base_work, self.l_ver, level, self.rates.gamma)
    }

    /// Bias bound of level `level`: the correction anchor of the next level
    /// inside the verification range, geometric decay beyond it.
    pub fn model_bias(&self, level: u32) -> f64 {
        let top = self.l_ver;
        if level < top {
            suffix_max(&self.bias_anchor[level as usize..])
        } else {
            let anchor = self.bias_anchor[top as usize - 1];
            anchor * 2f64.powf(-self.rates.q_w * (level - (top - 1)) as f64)
        }
    }

    pub fn model_variance(&self, level: u32, base: u32) -> f64 {
        let top = self.l_ver;
        if level == base {
            self.base_variance[base.min(top) as usize]
        } else if level <= top {
            suffix_max(&self.correction_variance[level as usize - 1..])
        } else {
            let anchor = self.correction_variance[top as usize - 1];
            anchor * 2f64.powf(-self.rates.q_s * (level - top) as f64)
        }
    }
}

// A noisy anchor below a finer one is raised to it, which keeps the
// models nonincreasing without ever lowering an anchor.
fn suffix_max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn extrapolate(values: &[f64], top: u32, level: u32, rate: f64) -> f64 {
    if level <= top {
        values[level as usize]
    } else {
        values[top as usize] * 2f64.powf(rate * (level - top) as f64)
    }
}

impl LevelModels for RateModels {
    fn work(&self, level: u32) -> f64 {
        self.model_work(level)
    }

    fn base_work(&self, level: u32) -> f64 {
        self.model_base_work(level)
    }

    fn bias(&self, level: u32) -> f64 {
        self.model_bias(level)
    }

    fn variance(&self, level: u32, base: u32) -> f64 {
        self.model_variance(level, base)
    }
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return f64::NAN;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Builds rate models from every sample at levels `0..=l_ver` of `pool`.
pub fn fit_rate_models(
    pool: &SamplePool,
    rates: Rates,
    l_ver: u32,
    boot: Bootstrap,
    config_digest: &str,
) -> Result<RateModels> {
    if l_ver == 0 {
        return Err(invalid("verification needs at least two levels"));
    }
    let mut rm = RateModels {
        rates,
        l_ver,
        work: Vec::new(),
        base_work: Vec::new(),
        bias_anchor: Vec::new(),
        base_variance: Vec::new(),
        correction_variance: Vec::new(),
        diagnostics: Vec::new(),
        measured: MeasuredRates { gamma: f64::NAN, q_w: f64::NAN, q_s: f64::NAN },
        config_digest: config_digest.to_string(),
    };
    for l in 0..=l_ver {
        let samples: Vec<_> = pool.samples(l).collect();
        let fine: Vec<f64> = samples.iter().map(|s| s.fine).collect();
        if fine.len() < 2 {
            return Err(Error::InsufficientSamples { level: l, have: fine.len(), need: 2 });
        }
        let seed = |tag: &str| derive_run(boot.seed, tag, l as u64);
        let mean_ci = bootstrap_ci(&fine, Statistic::Mean, boot.resamples, boot.coverage, seed("qm"))?;
        let var_ci = bootstrap_ci(&fine, Statistic::Variance, boot.resamples, boot.coverage, seed("qv"))?;
        let correction = if l > 0 {
            let d = pool.all_corrections(l);
            if d.len() < 2 {
                return Err(Error::InsufficientSamples { level: l, have: d.len(), need: 2 });
            }
            let m_ci = bootstrap_ci(&d, Statistic::Mean, boot.resamples, boot.coverage, seed("dm"))?;
            let v_ci = bootstrap_ci(&d, Statistic::Variance, boot.resamples, boot.coverage, seed("dv"))?;
            rm.bias_anchor.push(m_ci.0.abs().max(m_ci.1.abs()));
            rm.correction_variance.push(v_ci.1);
            Some(CorrectionDiagnostics {
                mean: mc_mean(&d)?,
                mean_ci: m_ci,
                variance: sample_variance(&d)?,
                variance_ci: v_ci,
            })
        } else {
            None
        };
        let coupled: Vec<_> = samples.iter().filter(|s| l == 0 || s.coarse.is_some()).collect();
        let work = coupled.iter().map(|s| s.work).sum::<f64>() / coupled.len().max(1) as f64;
        let base_work = samples.iter().map(|s| s.fine_work).sum::<f64>() / samples.len() as f64;
        rm.work.push(work);
        rm.base_work.push(base_work);
        rm.base_variance.push(var_ci.1);
        rm.diagnostics.push(LevelDiagnostics {
            level: l,
            samples: samples.len(),
            mean: mc_mean(&fine)?,
            mean_ci,
            variance: sample_variance(&fine)?,
            variance_ci: var_ci,
            correction,
            work,
            base_work,
        });
    }
    let lg = |x: f64| x.log2();
    let d = &rm.diagnostics;
    rm.measured = MeasuredRates {
        gamma: slope(&d.iter().map(|x| (x.level as f64, lg(x.base_work))).collect::<Vec<_>>()),
        q_w: -slope(
            &d.iter()
                .filter_map(|x| x.correction.as_ref().map(|c| (x.level as f64, lg(c.mean.abs()))))
                .collect::<Vec<_>>(),
        ),
        q_s: -slope(
            &d.iter()
                .filter_map(|x| x.correction.as_ref().map(|c| (x.level as f64, lg(c.variance))))
                .collect::<Vec<_>>(),
        ),
    };
    Ok(rm)
}

/// Runs `counts[l]` samples at each level `l` (coupled above level 0) and
/// fits the rate models.
#[allow(clippy::too_many_arguments)]
pub fn run_verification<M: SampleModel + ?Sized>(
    model: &M,
    run: u64,
    counts: &[u64],
    pool: &mut SamplePool,
    mut store: Option<&mut PoolStore>,
    workers: usize,
    rates: Rates,
    boot: Bootstrap,
) -> Result<RateModels> {
    if counts.len() < 2 {
        return Err(invalid("verification needs at least two levels"));
    }
    if let Some((l, &c)) = counts.iter().enumerate().find(|(_, &c)| c < 2) {
        return Err(Error::InsufficientSamples { level: l as u32, have: c as usize, need: 2 });
    }
    for (l, &n) in counts.iter().enumerate() {
        let kind = if l == 0 { SampleKind::Fine } else { SampleKind::Coupled };
        run_samples(model, run, l as u32, kind, n, pool, store.as_deref_mut(), workers)?;
    }
    let digest = pool.provenance.config_digest.clone();
    fit_rate_models(pool, rates, counts.len() as u32 - 1, boot, &digest)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn synthetic(l_ver: u32) -> RateModels {
        let n = l_ver as usize;
        RateModels {
            rates: Rates::default(),
            l_ver,
            work: (0..=n).map(|l| 8f64.powi(l as i32) * 1.1).collect(),
            base_work: (0..=n).map(|l| 8f64.powi(l as i32)).collect(),
            bias_anchor: (1..=n).map(|l| 0.5f64.powi(2 * l as i32)).collect(),
            base_variance: vec![1.0; n + 1],
            correction_variance: (1..=n).map(|l| 0.5f64.powi(4 * l as i32)).collect(),
            diagnostics: Vec::new(),
            measured: MeasuredRates { gamma: 3.0, q_w: 2.0, q_s: 4.0 },
            config_digest: String::new(),
        }
    }

    #[test]
    fn extrapolation_rules() {
        let rm = synthetic(3);
        rm.validate().unwrap();
        assert_eq!(rm.model_work(3), rm.work[3]);
        assert_eq!(rm.model_work(5), 64.0 * rm.work[3]);
        assert_eq!(rm.model_bias(1), rm.bias_anchor[1]);
        assert_eq!(rm.model_bias(2), rm.bias_anchor[2]);
        assert_eq!(rm.model_bias(3), rm.bias_anchor[2] / 4.0);
        assert_eq!(rm.model_bias(4), rm.bias_anchor[2] / 16.0);
        assert_eq!(rm.model_variance(2, 2), rm.base_variance[2]);
        assert_eq!(rm.model_variance(2, 0), rm.correction_variance[1]);
        assert_eq!(rm.model_variance(4, 0), rm.correction_variance[2] / 16.0);
        assert_eq!(rm.model_variance(6, 6), rm.base_variance[3]);
    }

    #[test]
    fn noisy_anchors_are_raised() {
        let mut rm = synthetic(3);
        rm.bias_anchor = vec![0.1, 0.01, 0.02];
        rm.correction_variance = vec![0.5, 0.05, 0.2];
        assert_eq!(rm.model_bias(1), 0.02);
        assert_eq!(rm.model_bias(0), 0.1);
        assert_eq!(rm.model_variance(2, 0), 0.2);
        assert_eq!(rm.model_variance(1, 0), 0.5);
    }

    #[test]
    fn synthetic_models_are_monotone() {
        let rm = synthetic(3);
        for l in 0..10 {
            assert!(rm.model_bias(l + 1) <= rm.model_bias(l));
            assert!(rm.model_work(l + 1) >= rm.model_work(l));
            if l >= 1 {
                assert!(rm.model_variance(l + 1, 0) <= rm.model_variance(l, 0));
            }
        }
    }
}
