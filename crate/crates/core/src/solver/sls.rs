//! Standard-linear-solid fit to a constant quality factor.
//!
//! The complex modulus of the generalized Zener body is
//! `M(w) = M_R * (1 + sum_b Y_b * i w / (w_b + i w))`, so that
//! `1/Q(w) = Im M / Re M`. Requiring `Im M = Re M / Q` at sample
//! frequencies is linear in the weights `Y_b`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Relative Q error tolerated anywhere in the fitted band.
pub const MAX_BAND_ERROR: f64 = 0.10;

const FIT_POINTS: usize = 64;
const CHECK_POINTS: usize = 400;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlsCoefficients {
    /// Relaxation angular frequencies, rad/s, strictly increasing.
    pub omega: Vec<f64>,
    /// Dimensionless weights `Y_b`, nonnegative.
    pub weights: Vec<f64>,
    /// Angular frequency at which the phase velocity equals the input
    /// velocity.
    pub omega_ref: f64,
}

impl SlsCoefficients {
    pub fn mechanisms(&self) -> usize {
        self.omega.len()
    }

    pub fn is_elastic(&self) -> bool {
        self.weights.iter().all(|&y| y == 0.0)
    }

    /// `M(w) / M_R` as (real, imaginary).
    pub fn modulus_ratio(&self, w: f64) -> (f64, f64) {
        let mut re = 1.0;
        let mut im = 0.0;
        for (&wb, &y) in self.omega.iter().zip(&self.weights) {
            let den = wb * wb + w * w;
            re += y * w * w / den;
            im += y * w * wb / den;
        }
        (re, im)
    }

    pub fn inverse_q(&self, w: f64) -> f64 {
        let (re, im) = self.modulus_ratio(w);
        im / re
    }

    /// Modeled quality factor at angular frequency `w`.
    pub fn q_at(&self, w: f64) -> f64 {
        1.0 / self.inverse_q(w)
    }

    /// Factor turning a modulus sampled at `omega_ref` into the unrelaxed
    /// modulus used by the time stepper.
    pub fn unrelaxed_factor(&self) -> f64 {
        let sum: f64 = self.weights.iter().sum();
        (1.0 + sum) / self.modulus_ratio(self.omega_ref).0
    }

    /// Weights normalized by the unrelaxed modulus, `Y_b / (1 + sum Y)`.
    pub fn memory_weights(&self) -> Vec<f64> {
        let sum: f64 = self.weights.iter().sum();
        self.weights.iter().map(|y| y / (1.0 + sum)).collect()
    }

    /// Largest relative deviation of `Q(w)` from `q_target` over a dense
    /// log-spaced sweep of `[f_min, f_max]` Hz.
    pub fn max_relative_error(&self, q_target: f64, f_band: [f64; 2]) -> f64 {
        log_space(f_band[0], f_band[1], CHECK_POINTS)
            .map(|f| {
                let q = self.q_at(std::f64::consts::TAU * f);
                ((q - q_target) / q_target).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn log_space(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(move |k| {
        if n == 1 {
            (0.5 * (a + b)).exp()
        } else {
            (a + (b - a) * k as f64 / (n - 1) as f64).exp()
        }
    })
}

/// Fits `b` mechanisms with log-spaced relaxation frequencies spanning
/// `f_band` so that the modeled Q stays near `q_target` across the band.
///
/// An infinite `q_target` yields the elastic limit (all weights zero).
pub fn fit_sls(q_target: f64, b: usize, f_band: [f64; 2]) -> Result<SlsCoefficients> {
    let [f_min, f_max] = f_band;
    if b == 0 {
        return Err(invalid("need at least one relaxation mechanism"));
    }
    if !(f_min > 0.0 && f_min < f_max && f_max.is_finite()) {
        return Err(invalid("frequency band must satisfy 0 < f_min < f_max"));
    }
    if !(q_target > 0.0) {
        return Err(invalid("quality factor must be positive"));
    }
    let tau = std::f64::consts::TAU;
    let omega: Vec<f64> = log_space(f_min, f_max, b).map(|f| tau * f).collect();
    let omega_ref = tau * (f_min * f_max).sqrt();
    if q_target.is_infinite() {
        return Ok(SlsCoefficients { weights: vec![0.0; b], omega, omega_ref });
    }

    let qi = 1.0 / q_target;
    let freqs: Vec<f64> = log_space(f_min, f_max, FIT_POINTS).map(|f| tau * f).collect();
    let mut active: Vec<usize> = (0..b).collect();
    let weights = loop {
        let a = DMatrix::from_fn(freqs.len(), active.len(), |k, c| {
            let (w, wb) = (freqs[k], omega[active[c]]);
            (w * wb - qi * w * w) / (wb * wb + w * w)
        });
        let rhs = DVector::from_element(freqs.len(), qi);
        let sol = a
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .map_err(|e| invalid(format!("least-squares solve failed: {e}")))?;
        if let Some(worst) = (0..active.len())
            .filter(|&c| sol[c] < 0.0)
            .min_by(|&x, &y| sol[x].total_cmp(&sol[y]))
        {
            active.remove(worst);
            if active.is_empty() {
                break vec![0.0; b];
            }
            continue;
        }
        let mut y = vec![0.0; b];
        for (c, &m) in active.iter().enumerate() {
            y[m] = sol[c];
        }
        break y;
    };

    let coeffs = SlsCoefficients { omega, weights, omega_ref };
    let err = coeffs.max_relative_error(q_target, f_band);
    if err > MAX_BAND_ERROR {
        return Err(Error::SlsFit { max_rel_err: err, allowed: MAX_BAND_ERROR });
    }
    Ok(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elastic_limit_has_no_weights() {
        let c = fit_sls(f64::INFINITY, 3, [0.1, 10.0]).unwrap();
        assert!(c.is_elastic());
        assert_eq!(c.inverse_q(10.0), 0.0);
        assert_eq!(c.unrelaxed_factor(), 1.0);
    }

    #[test]
    fn single_mechanism_matches_zener_curve() {
        let fc = 1.3;
        let c = fit_sls(50.0, 1, [fc / 1.05, fc * 1.05]).unwrap();
        let wb = c.omega[0];
        let y = c.weights[0];
        assert!((wb - std::f64::consts::TAU * fc).abs() < 1e-9);
        for k in 0..50 {
            let w = wb * (0.2 + 0.1 * k as f64);
            let zener = (1.0 + y * w * w / (wb * wb + w * w)) * (wb * wb + w * w) / (y * w * wb);
            assert!((c.q_at(w) - zener).abs() / zener < 1e-6);
        }
    }

    #[test]
    fn three_mechanisms_hold_q_in_two_decades() {
        for q in [30.0, 100.0, 300.0, 600.0, 800.0] {
            let c = fit_sls(q, 3, [0.2, 20.0]).unwrap();
            assert!(c.max_relative_error(q, [0.2, 20.0]) <= 0.10);
            assert!(c.weights.iter().all(|&y| y >= 0.0));
            assert!(c.omega.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn too_wide_band_is_reported() {
        let err = fit_sls(20.0, 1, [0.01, 100.0]).unwrap_err();
        assert!(matches!(err, Error::SlsFit { .. }));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(fit_sls(100.0, 0, [1.0, 2.0]).is_err());
        assert!(fit_sls(100.0, 3, [2.0, 1.0]).is_err());
        assert!(fit_sls(-1.0, 3, [1.0, 2.0]).is_err());
    }
}
