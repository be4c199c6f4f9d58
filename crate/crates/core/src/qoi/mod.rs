//! Misfit quantities of interest between simulated and observed
//! seismograms.
//!
//! * [`qoi_e`]: time-averaged squared L² distance, with the data taken as
//!   the piecewise-linear interpolant of the observations.
//! * [`qoi_w`]: per receiver and component, the quadratic Wasserstein
//!   distance between the normalized positive parts plus that between the
//!   normalized negative parts, in normalized time `tau = t / T`.

mod wasserstein;

use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{invalid, Error, Result};
use crate::solver::Seismogram;

pub use wasserstein::{split_signs, w2_squared, DiscreteCdf, SignedSeries};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QoiKind {
    #[serde(rename = "E")]
    L2,
    #[serde(rename = "W")]
    Wasserstein,
}

impl QoiKind {
    pub fn evaluate(self, sim: &[Seismogram], data: &DataSet) -> Result<f64> {
        match self {
            QoiKind::L2 => qoi_e(sim, data),
            QoiKind::Wasserstein => qoi_w(sim, data),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            QoiKind::L2 => "E",
            QoiKind::Wasserstein => "W",
        }
    }
}

impl std::str::FromStr for QoiKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "E" | "e" => Ok(QoiKind::L2),
            "W" | "w" => Ok(QoiKind::Wasserstein),
            _ => Err(invalid(format!("unknown QoI kind {s:?}; expected E or W"))),
        }
    }
}

/// Index map from observation samples into a simulation grid.
#[derive(Clone, Copy, Debug)]
struct Alignment {
    /// Simulation index of the first observation (t = 0).
    start: usize,
    /// Simulation steps per observation interval.
    ratio: usize,
    /// Simulation index of the horizon.
    end: usize,
}

fn whole(x: f64, what: &str) -> Result<usize> {
    let r = x.round();
    if r < 0.0 || (x - r).abs() > 1e-6 {
        return Err(Error::GridMismatch(format!("{what} is not a whole number ({x})")));
    }
    Ok(r as usize)
}

fn align(sim: &Seismogram, obs: &Seismogram, horizon: f64) -> Result<Alignment> {
    if obs.t0.abs() > 1e-9 * obs.dt {
        return Err(Error::GridMismatch("observations must start at t = 0".into()));
    }
    let start = whole(-sim.t0 / sim.dt, "offset of t = 0 in the simulation grid")?;
    let ratio = whole(obs.dt / sim.dt, "observation step / simulation step")?;
    let end = start + whole(horizon / sim.dt, "horizon / simulation step")?;
    if ratio == 0 {
        return Err(Error::GridMismatch("observations finer than the simulation".into()));
    }
    if end >= sim.len() {
        return Err(Error::GridMismatch("simulation does not cover the horizon".into()));
    }
    if (obs.len() - 1) * ratio < end - start {
        return Err(Error::GridMismatch("observations do not cover the horizon".into()));
    }
    Ok(Alignment { start, ratio, end })
}

fn check_pairs(sim: &[Seismogram], data: &DataSet) -> Result<()> {
    if sim.len() != data.traces.len() || sim.is_empty() {
        return Err(Error::GridMismatch(format!(
            "{} simulated receivers against {} observed",
            sim.len(),
            data.traces.len()
        )));
    }
    Ok(())
}

/// `(1/T) * sum_n int_0^T |u(x_n, t) - d(x_n, t)|^2 dt`, trapezoid on the
/// simulation grid.
pub fn qoi_e(sim: &[Seismogram], data: &DataSet) -> Result<f64> {
    check_pairs(sim, data)?;
    let horizon = data.horizon;
    let mut total = 0.0;
    for (s, d) in sim.iter().zip(&data.traces) {
        let al = align(s, d, horizon)?;
        for j in 0..2 {
            let (u, obs) = (s.component(j), d.component(j));
            let mut acc = 0.0;
            for n in al.start..=al.end {
                let m = n - al.start;
                let (k, r) = (m / al.ratio, m % al.ratio);
                let dv = if r == 0 {
                    obs[k]
                } else {
                    let f = r as f64 / al.ratio as f64;
                    obs[k] * (1.0 - f) + obs[k + 1] * f
                };
                let w = if n == al.start || n == al.end { 0.5 } else { 1.0 };
                acc += w * (u[n] - dv).powi(2);
            }
            total += acc * s.dt;
        }
    }
    Ok(total / horizon)
}

/// Distance between the matched sign parts of two signals: the squared
/// Wasserstein distance of the normalized parts, or 1 when either part
/// vanishes identically.
fn part_distance(a: &SignedSeries, b: &SignedSeries) -> Result<f64> {
    if a.is_zero() || b.is_zero() {
        return Ok(1.0);
    }
    w2_squared(a, b)
}

/// Sum over both sign parts for one pair of scalar signals.
pub fn signed_w2(sim: &SignedSeries, obs: &SignedSeries) -> Result<f64> {
    let (sp, sn) = split_signs(sim);
    let (op, on) = split_signs(obs);
    Ok(part_distance(&sn.negated(), &on.negated())? + part_distance(&sp, &op)?)
}

/// Wasserstein misfit summed over receivers and components.
pub fn qoi_w(sim: &[Seismogram], data: &DataSet) -> Result<f64> {
    check_pairs(sim, data)?;
    let horizon = data.horizon;
    let mut total = 0.0;
    for (s, d) in sim.iter().zip(&data.traces) {
        let al = align(s, d, horizon)?;
        let kmax = (al.end - al.start) / al.ratio;
        let ts: Vec<f64> = (al.start..=al.end).map(|n| (n - al.start) as f64 * s.dt / horizon).collect();
        let td: Vec<f64> = (0..=kmax).map(|k| k as f64 * d.dt / horizon).collect();
        for j in 0..2 {
            let a = SignedSeries::new(ts.clone(), s.component(j)[al.start..=al.end].to_vec())?;
            let b = SignedSeries::new(td.clone(), d.component(j)[..=kmax].to_vec())?;
            total += signed_w2(&a, &b)?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataSet;

    fn trace(t0: f64, dt: f64, n: usize, f: impl Fn(f64) -> f64) -> Seismogram {
        let ux: Vec<f64> = (0..n).map(|k| f(t0 + k as f64 * dt)).collect();
        let uz = ux.iter().map(|v| -0.5 * v).collect();
        Seismogram { receiver: 0, t0, dt, ux, uz }
    }

    fn pulse(t: f64) -> f64 {
        let a = t - 2.0;
        -a * (-4.0 * a * a).exp()
    }

    fn dataset(traces: Vec<Seismogram>, horizon: f64) -> DataSet {
        DataSet::from_traces(traces, horizon, 0.0)
    }

    #[test]
    fn identical_data_has_zero_misfit() {
        let sim = vec![trace(-0.5, 0.01, 551, pulse)];
        let data = dataset(vec![sim[0].subsample(50, 1)], 5.0);
        assert_eq!(qoi_e(&sim, &data).unwrap(), 0.0);
        assert_eq!(qoi_w(&sim, &data).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_gives_its_square() {
        let sim = vec![trace(-0.5, 0.01, 551, |_| 0.0)];
        let mut obs = sim[0].subsample(50, 4);
        obs.ux.iter_mut().for_each(|v| *v = 0.3);
        let data = dataset(vec![obs], 5.0);
        assert!((qoi_e(&sim, &data).unwrap() - 0.09).abs() < 1e-14);
    }

    #[test]
    fn grid_containment_is_enforced() {
        let sim = vec![trace(-0.5, 0.01, 551, pulse)];
        let obs = trace(0.0, 0.015, 334, pulse);
        let data = dataset(vec![obs], 5.0);
        assert!(matches!(qoi_e(&sim, &data), Err(Error::GridMismatch(_))));
        let short = vec![trace(-0.5, 0.01, 300, pulse)];
        let data = dataset(vec![sim[0].subsample(50, 4)], 5.0);
        assert!(qoi_e(&short, &data).is_err());
        assert!(qoi_e(&[], &data).is_err());
    }

    #[test]
    fn one_signed_component_hits_the_fallback() {
        let t: Vec<f64> = (0..=200).map(|k| k as f64 / 200.0).collect();
        let pos: Vec<f64> = t.iter().map(|&x| (-50.0 * (x - 0.4).powi(2)).exp()).collect();
        let both: Vec<f64> = t.iter().map(|&x| (std::f64::consts::TAU * x).sin()).collect();
        let a = SignedSeries::new(t.clone(), pos).unwrap();
        let b = SignedSeries::new(t.clone(), both).unwrap();
        let (ap, _) = split_signs(&a);
        let (bp, _) = split_signs(&b);
        let expect = 1.0 + w2_squared(&ap, &bp).unwrap();
        assert!((signed_w2(&a, &b).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("E".parse::<QoiKind>().unwrap(), QoiKind::L2);
        assert_eq!("w".parse::<QoiKind>().unwrap(), QoiKind::Wasserstein);
        assert!("X".parse::<QoiKind>().is_err());
    }
}
