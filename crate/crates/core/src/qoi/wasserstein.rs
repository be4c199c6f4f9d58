//! One-dimensional quadratic Wasserstein distance between piecewise-linear
//! densities.

use crate::error::{invalid, Result};

/// Piecewise-linear function through `(t[k], v[k])`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedSeries {
    t: Vec<f64>,
    v: Vec<f64>,
}

impl SignedSeries {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if t.len() < 2 || t.len() != v.len() {
            return Err(invalid("a series needs at least two knots and one value per knot"));
        }
        if t.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("knots must be strictly increasing"));
        }
        if v.iter().chain(&t).any(|x| !x.is_finite()) {
            return Err(invalid("series values must be finite"));
        }
        Ok(Self { t, v })
    }

    pub fn knots(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    /// Trapezoid integral.
    pub fn integral(&self) -> f64 {
        self.t
            .windows(2)
            .zip(self.v.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.v.iter().all(|&x| x == 0.0)
    }

    pub fn negated(&self) -> Self {
        Self { t: self.t.clone(), v: self.v.iter().map(|x| -x).collect() }
    }
}

/// Splits a series at its linearly interpolated zero crossings into the
/// nonnegative part and the nonpositive part, both on the augmented grid.
pub fn split_signs(series: &SignedSeries) -> (SignedSeries, SignedSeries) {
    let (t, v) = (&series.t, &series.v);
    let mut tt = Vec::with_capacity(t.len() + 8);
    let mut vv = Vec::with_capacity(t.len() + 8);
    for k in 0..t.len() {
        if k > 0 && (v[k - 1] > 0.0 && v[k] < 0.0 || v[k - 1] < 0.0 && v[k] > 0.0) {
            let z = t[k - 1] + v[k - 1] / (v[k - 1] - v[k]) * (t[k] - t[k - 1]);
            if z > t[k - 1] && z < t[k] {
                tt.push(z);
                vv.push(0.0);
            }
        }
        tt.push(t[k]);
        vv.push(v[k]);
    }
    let pos = vv.iter().map(|&x| x.max(0.0)).collect();
    let neg = vv.iter().map(|&x| x.min(0.0)).collect();
    (SignedSeries { t: tt.clone(), v: pos }, SignedSeries { t: tt, v: neg })
}

/// Normalized cumulative distribution of a nonnegative series, piecewise
/// linear in the abscissae.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteCdf {
    x: Vec<f64>,
    f: Vec<f64>,
}

impl DiscreteCdf {
    /// Cumulative trapezoid of `density`, scaled to end at exactly 1.
    pub fn from_density(density: &SignedSeries) -> Result<Self> {
        if density.v.iter().any(|&x| x < 0.0) {
            return Err(invalid("density has negative values"));
        }
        let mut f = Vec::with_capacity(density.v.len());
        let mut acc = 0.0;
        f.push(0.0);
        for (t, v) in density.t.windows(2).zip(density.v.windows(2)) {
            acc += 0.5 * (t[1] - t[0]) * (v[0] + v[1]);
            f.push(acc);
        }
        if !(acc > 0.0) {
            return Err(invalid("density has zero mass"));
        }
        let last = f.len() - 1;
        for x in &mut f[..last] {
            *x /= acc;
        }
        f[last] = 1.0;
        Ok(Self { x: density.t.clone(), f })
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.f
    }

    /// Quantile by linear interpolation. For `p < 1` the bracketing
    /// interval ends at the first value exceeding `p`; `p = 1` maps to the
    /// first abscissa where the CDF reaches 1.
    pub fn inverse(&self, p: f64) -> f64 {
        let f = &self.f;
        if p >= 1.0 {
            let k = f.partition_point(|&v| v < 1.0);
            return self.x[k.min(f.len() - 1)];
        }
        let k = f.partition_point(|&v| v <= p).clamp(1, f.len() - 1);
        let (f0, f1) = (f[k - 1], f[k]);
        let (x0, x1) = (self.x[k - 1], self.x[k]);
        if f1 > f0 {
            x0 + (p - f0) / (f1 - f0) * (x1 - x0)
        } else {
            x0
        }
    }
}

/// `int_0^1 |F^-1(p) - G^-1(p)|^2 dp` for the normalized densities `f` and
/// `g`, by the trapezoid rule on the union of both sets of CDF values.
pub fn w2_squared(f: &SignedSeries, g: &SignedSeries) -> Result<f64> {
    let cf = DiscreteCdf::from_density(f)?;
    let cg = DiscreteCdf::from_density(g)?;
    let mut ps: Vec<f64> = cf.f.iter().chain(&cg.f).copied().collect();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    let d2: Vec<f64> = ps.iter().map(|&p| (cf.inverse(p) - cg.inverse(p)).powi(2)).collect();
    Ok(ps
        .windows(2)
        .zip(d2.windows(2))
        .map(|(p, d)| 0.5 * (p[1] - p[0]) * (d[0] + d[1]))
        .sum())
}
