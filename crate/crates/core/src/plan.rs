//! Hierarchy selection: optimal sample counts, brute-force MLMC and MC
//! plans, splitting and tolerance schedules.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Work, bias and variance models of a level hierarchy.
pub trait LevelModels {
    /// Cost of one correction sample at `level` (fine plus coarse solve).
    fn work(&self, level: u32) -> f64;
    /// Cost of one fine-only sample at `level`.
    fn base_work(&self, level: u32) -> f64 {
        self.work(level)
    }
    /// Bound on `|E[Q - Q_level]|`.
    fn bias(&self, level: u32) -> f64;
    /// Variance of the level-`level` term of an estimator based at `base`.
    fn variance(&self, level: u32, base: u32) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanKind {
    #[serde(rename = "MC")]
    Mc,
    #[serde(rename = "MLMC")]
    Mlmc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub kind: PlanKind,
    pub l0: u32,
    pub l_top: u32,
    /// `N_l` for `l = l0..=l_top`.
    pub samples: Vec<u64>,
    pub theta: f64,
    pub c_alpha: f64,
    pub tol: f64,
    pub predicted_work: f64,
    pub predicted_bias: f64,
    /// `sum_l V_l / N_l` under the models.
    pub predicted_variance: f64,
}

impl Plan {
    pub fn levels(&self) -> RangeInclusive<u32> {
        self.l0..=self.l_top
    }

    pub fn samples_at(&self, level: u32) -> Option<u64> {
        level.checked_sub(self.l0).and_then(|k| self.samples.get(k as usize)).copied()
    }

    /// Statistical error budget `(theta * tol / c_alpha)^2`.
    pub fn variance_budget(&self) -> f64 {
        (self.theta * self.tol / self.c_alpha).powi(2)
    }
}

/// `N_l = max(2, ceil((c_alpha / (theta tol))^2 sqrt(V_l / W_l) sum_k sqrt(W_k V_k)))`.
pub fn optimal_samples(
    tol: f64,
    theta: f64,
    c_alpha: f64,
    variances: &[f64],
    works: &[f64],
) -> Result<Vec<u64>> {
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(invalid(format!("splitting parameter {theta} outside (0, 1)")));
    }
    if !(c_alpha > 0.0) {
        return Err(invalid("confidence parameter must be positive"));
    }
    if variances.len() != works.len() || variances.is_empty() {
        return Err(invalid("need one variance and one work per level"));
    }
    if variances.iter().chain(works).any(|v| !(*v >= 0.0 && v.is_finite())) || works.iter().any(|w| *w <= 0.0) {
        return Err(invalid("variances must be nonnegative and works positive"));
    }
    let scale = (c_alpha / (theta * tol)).powi(2);
    let total: f64 = variances.iter().zip(works).map(|(v, w)| (v * w).sqrt()).sum();
    Ok(variances
        .iter()
        .zip(works)
        .map(|(v, w)| {
            let n = (scale * (v / w).sqrt() * total).ceil();
            if n.is_finite() {
                (n as u64).max(2)
            } else {
                u64::MAX
            }
        })
        .collect())
}

fn build<M: LevelModels + ?Sized>(
    kind: PlanKind,
    tol: f64,
    c_alpha: f64,
    l0: u32,
    l_top: u32,
    m: &M,
) -> Result<Plan> {
    let bias = m.bias(l_top);
    let theta = 1.0 - bias / tol;
    let vars: Vec<f64> = (l0..=l_top).map(|l| m.variance(l, l0)).collect();
    let works: Vec<f64> = (l0..=l_top)
        .map(|l| if l == l0 { m.base_work(l) } else { m.work(l) })
        .collect();
    let samples = optimal_samples(tol, theta, c_alpha, &vars, &works)?;
    let predicted_work = samples.iter().zip(&works).map(|(&n, w)| n as f64 * w).sum();
    let predicted_variance = samples.iter().zip(&vars).map(|(&n, v)| v / n as f64).sum();
    Ok(Plan {
        kind,
        l0,
        l_top,
        samples,
        theta,
        c_alpha,
        tol,
        predicted_work,
        predicted_bias: bias,
        predicted_variance,
    })
}

fn infeasible<M: LevelModels + ?Sized>(tol: f64, l_max: u32, m: &M) -> Error {
    let best_bias = (0..=l_max).map(|l| m.bias(l)).fold(f64::INFINITY, f64::min);
    Error::Infeasible { tol, best_bias }
}

/// Exhaustive search over `0 <= l0 <= L <= l_max` for the cheapest
/// hierarchy whose bias model stays below `tol`. Ties go to the smaller
/// `L`, then the smaller `l0`.
pub fn select_hierarchy<M: LevelModels + ?Sized>(
    tol: f64,
    c_alpha: f64,
    l_max: u32,
    m: &M,
) -> Result<Plan> {
    let mut best: Option<Plan> = None;
    for l_top in 0..=l_max {
        if !(m.bias(l_top) < tol) {
            continue;
        }
        for l0 in 0..=l_top {
            let p = build(PlanKind::Mlmc, tol, c_alpha, l0, l_top, m)?;
            if best.as_ref().is_none_or(|b| p.predicted_work < b.predicted_work) {
                best = Some(p);
            }
        }
    }
    best.ok_or_else(|| infeasible(tol, l_max, m))
}

/// Cheapest single-level estimator meeting the bias constraint.
pub fn select_mc<M: LevelModels + ?Sized>(tol: f64, c_alpha: f64, l_max: u32, m: &M) -> Result<Plan> {
    let mut best: Option<Plan> = None;
    for l in 0..=l_max {
        if !(m.bias(l) < tol) {
            continue;
        }
        let p = build(PlanKind::Mc, tol, c_alpha, l, l, m)?;
        if best.as_ref().is_none_or(|b| p.predicted_work < b.predicted_work) {
            best = Some(p);
        }
    }
    best.ok_or_else(|| infeasible(tol, l_max, m))
}

/// Asymptotically optimal splitting of single-level MC,
/// `(1 + gamma / (2 q_w))^-1`.
pub fn mc_optimal_splitting(gamma: f64, q_w: f64) -> f64 {
    1.0 / (1.0 + gamma / (2.0 * q_w))
}

/// `tol_k = tol1 * 2^(-(k-1)/2)` for `k = 1..=k_max`.
pub fn tolerance_schedule(tol1: f64, k_max: usize) -> Vec<f64> {
    (0..k_max).map(|k| tol1 * std::f64::consts::FRAC_1_SQRT_2.powi(k as i32)).collect()
}
