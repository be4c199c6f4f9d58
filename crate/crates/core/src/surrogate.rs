//! Cheap stand-in for the solver with closed-form moments.
//!
//! `Q_l(theta) = sum_i theta_i^2 + C_b (1 + theta_1) 2^(-q_w l)` with
//! `theta ~ U[0,1]^m`, and simulated work `W_0 2^(gamma l)` per evaluation.
//! The limit has mean `m / 3`, the bias is exactly `1.5 C_b 2^(-q_w l)` and
//! corrections decay in variance at rate `2 q_w`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::SampleKey;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub dim: usize,
    pub q_w: f64,
    pub gamma: f64,
    pub c_b: f64,
    pub w0: f64,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        Self { dim: 4, q_w: 2.0, gamma: 3.0, c_b: 1.0, w0: 1e-3 }
    }
}

impl SurrogateSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("surrogate dimension must be positive"));
        }
        if !(self.q_w > 0.0 && self.gamma > 0.0 && self.w0 > 0.0) || self.c_b == 0.0 {
            return Err(invalid("surrogate needs q_w, gamma, w0 > 0 and c_b != 0"));
        }
        Ok(())
    }

    /// Strong-rate exponent of the corrections.
    pub fn q_s(&self) -> f64 {
        2.0 * self.q_w
    }

    pub fn draw(&self, key: SampleKey) -> Vec<f64> {
        let mut rng = key.rng();
        (0..self.dim).map(|_| rng.random::<f64>()).collect()
    }

    /// QoI value and simulated work at `level`.
    pub fn eval(&self, theta: &[f64], level: u32) -> (f64, f64) {
        let g: f64 = theta.iter().map(|x| x * x).sum();
        let b = self.c_b * (1.0 + theta[0]);
        let decay = 2f64.powf(-self.q_w * level as f64);
        (g + b * decay, self.work(level))
    }

    pub fn work(&self, level: u32) -> f64 {
        self.w0 * 2f64.powf(self.gamma * level as f64)
    }

    pub fn exact_mean(&self) -> f64 {
        self.dim as f64 / 3.0
    }

    /// `E[Q_l] - E[Q]`.
    pub fn exact_bias(&self, level: u32) -> f64 {
        1.5 * self.c_b * 2f64.powf(-self.q_w * level as f64)
    }

    pub fn exact_level_mean(&self, level: u32) -> f64 {
        self.exact_mean() + self.exact_bias(level)
    }

    /// `Var[Q_l]`.
    pub fn exact_variance(&self, level: u32) -> f64 {
        let c = self.c_b * 2f64.powf(-self.q_w * level as f64);
        self.dim as f64 * 4.0 / 45.0 + c * c / 12.0 + 2.0 * c / 12.0
    }

    /// `Var[Q_l - Q_{l-1}]` for `l >= 1`.
    pub fn exact_correction_variance(&self, level: u32) -> f64 {
        let l = level as f64;
        let d = self.c_b * (2f64.powf(-self.q_w * l) - 2f64.powf(-self.q_w * (l - 1.0)));
        d * d / 12.0
    }
}
