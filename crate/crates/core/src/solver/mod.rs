//! Level-parameterized 2-D P-SV forward model.
//!
//! Waves are propagated with a second-order velocity-stress scheme on a
//! staggered grid, with a traction-free top surface, sponge absorption on
//! the other three sides and optional standard-linear-solid attenuation.
//! Level `l` uses `h = h0 / 2^l` and `dt = dt0 / 2^l`.

mod fd;
mod io;
mod sls;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::medium::{LayeredMedium, MaterialSample, UncertaintySpec};

pub use fd::{grid_shape, simulate, GridShape, Simulation};
pub use io::{read_seismograms, write_seismograms};
pub use sls::{fit_sls, SlsCoefficients, MAX_BAND_ERROR};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub index: u32,
    pub h: f64,
    pub dt: f64,
}

impl Level {
    pub fn new(index: u32, h0: f64, dt0: f64) -> Self {
        let s = 0.5f64.powi(index as i32);
        Self { index, h: h0 * s, dt: dt0 * s }
    }

    /// Grid spacing of level 0 in the same hierarchy.
    pub fn h0(&self) -> f64 {
        self.h * 2f64.powi(self.index as i32)
    }

    pub fn check_stability(&self, vp_max: f64, c_cfl: f64) -> Result<()> {
        let bound = c_cfl * self.h / vp_max;
        if self.dt > bound {
            return Err(Error::Unstable { level: self.index, dt: self.dt, bound });
        }
        Ok(())
    }
}

/// Coarsest grid spacing and time step plus the CFL factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub h0: f64,
    pub dt0: f64,
    pub c_cfl: f64,
}

impl Discretization {
    pub fn level(&self, index: u32) -> Level {
        Level::new(index, self.h0, self.dt0)
    }

    /// Checks the CFL bound at levels `0..=l_max` for every sample `unc`
    /// admits, including the stiffening by attenuation.
    pub fn check_hierarchy(
        &self,
        medium: &LayeredMedium,
        unc: &UncertaintySpec,
        opts: &SimOptions,
        f0: f64,
        l_max: u32,
    ) -> Result<()> {
        let stiff = opts.max_velocity_factor(medium, f0)?;
        let vp = unc.vp_upper_bound(medium) * stiff;
        (0..=l_max).try_for_each(|l| self.level(l).check_stability(vp, self.c_cfl))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    /// Horizontal source coordinate, m.
    pub x_s: f64,
    /// Source depth below the free surface, m.
    pub depth: f64,
    /// Symmetric moment tensor `[[Mxx, Mxz], [Mzx, Mzz]]`, N m.
    pub moment: [[f64; 2]; 2],
    pub f0: f64,
    pub t_c: f64,
    pub t0: f64,
    pub horizon: f64,
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        let m = self.moment;
        if m[0][1] != m[1][0] {
            return Err(invalid("moment tensor must be symmetric"));
        }
        if !(self.f0 > 0.0) {
            return Err(invalid("f0 must be positive"));
        }
        if !(self.t0 < self.t_c && self.t_c < self.horizon) {
            return Err(invalid("need t0 < t_c < horizon"));
        }
        if !(self.depth >= 0.0) {
            return Err(invalid("source depth must be nonnegative"));
        }
        Ok(())
    }

    pub fn stf(&self, t: f64) -> f64 {
        gaussian_stf(t, self.f0, self.t_c)
    }

    /// Band over which the attenuation model is fitted.
    pub fn attenuation_band(&self) -> [f64; 2] {
        [self.f0 / 10.0, self.f0 * 10.0]
    }
}

/// Gaussian source-time function with unit integral,
/// `3 f0 / sqrt(2 pi) * exp(-9 f0^2 (t - t_c)^2 / 2)`.
pub fn gaussian_stf(t: f64, f0: f64, t_c: f64) -> f64 {
    let a = t - t_c;
    3.0 * f0 / (2.0 * std::f64::consts::PI).sqrt() * (-4.5 * f0 * f0 * a * a).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Signed horizontal receiver offsets from the source, m.
    pub offsets: Vec<f64>,
    /// Receiver depth, m (0 is the free surface).
    pub receiver_depth: f64,
    pub pad_x: f64,
    pub pad_z: f64,
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        if self.offsets.is_empty() {
            return Err(invalid("need at least one receiver"));
        }
        if !(self.pad_x > 0.0 && self.pad_z > 0.0) {
            return Err(invalid("domain pads must be positive"));
        }
        if !(self.receiver_depth >= 0.0) || self.offsets.iter().any(|o| !o.is_finite()) {
            return Err(invalid("receiver positions must be finite, depth >= 0"));
        }
        Ok(())
    }

    pub fn receivers(&self) -> usize {
        self.offsets.len()
    }
}

/// Settings of the forward model that do not vary between samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub attenuation: bool,
    pub mechanisms: usize,
    /// Sponge width in level-0 cells.
    pub sponge_cells: usize,
    /// Design amplitude reflection of the sponge at normal incidence.
    pub sponge_reflection: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { attenuation: true, mechanisms: 3, sponge_cells: 20, sponge_reflection: 1e-3 }
    }
}

impl SimOptions {
    pub fn elastic(self) -> Self {
        Self { attenuation: false, ..self }
    }

    /// Largest ratio of unrelaxed to reference velocity over the layers.
    pub fn max_velocity_factor(&self, medium: &LayeredMedium, f0: f64) -> Result<f64> {
        if !self.attenuation {
            return Ok(1.0);
        }
        let band = [f0 / 10.0, f0 * 10.0];
        medium.layers().iter().try_fold(1.0f64, |acc, l| {
            let c = fit_sls(l.q_factor, self.mechanisms, band)?;
            Ok(acc.max(c.unrelaxed_factor().sqrt()))
        })
    }
}

/// Padding that keeps sponge and boundary reflections away from the
/// receivers for the whole horizon: half the round trip at the fastest
/// admissible P speed plus one dominant wavelength.
pub fn required_padding(
    unc: &UncertaintySpec,
    medium: &LayeredMedium,
    horizon: f64,
    f0: f64,
) -> f64 {
    let v = unc.vp_upper_bound(medium);
    v * horizon.max(0.0) / 2.0 + v / f0
}

/// Displacement at one receiver on a uniform time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seismogram {
    pub receiver: usize,
    pub t0: f64,
    pub dt: f64,
    pub ux: Vec<f64>,
    pub uz: Vec<f64>,
}

impl Seismogram {
    pub fn len(&self) -> usize {
        self.ux.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ux.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    pub fn component(&self, j: usize) -> &[f64] {
        if j == 0 {
            &self.ux
        } else {
            &self.uz
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.ux.iter().chain(&self.uz).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Every `stride`-th sample starting at index `start`.
    pub fn subsample(&self, start: usize, stride: usize) -> Seismogram {
        let pick = |v: &[f64]| v.iter().skip(start).step_by(stride).copied().collect();
        Seismogram {
            receiver: self.receiver,
            t0: self.time(start),
            dt: self.dt * stride as f64,
            ux: pick(&self.ux),
            uz: pick(&self.uz),
        }
    }
}

/// Runs `f` and returns its result with the CPU time it consumed on the
/// calling thread, in seconds.
pub fn measure_work<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = thread_cpu_time();
    let out = f();
    (out, (thread_cpu_time() - start).max(1e-9))
}

#[cfg(unix)]
fn thread_cpu_time() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid out-pointer for the duration of the call.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return wall_clock();
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

#[cfg(not(unix))]
fn thread_cpu_time() -> f64 {
    wall_clock()
}

fn wall_clock() -> f64 {
    use std::sync::OnceLock;
    use std::time::Instant;
    static START: OnceLock<Instant> = OnceLock::new();
    START.get_or_init(Instant::now).elapsed().as_secs_f64()
}

/// Largest unrelaxed P speed of a sample under `opts`.
pub(crate) fn sample_vp_max(
    sample: &MaterialSample,
    medium: &LayeredMedium,
    opts: &SimOptions,
    f0: f64,
) -> Result<f64> {
    Ok(sample.vp_max() * opts.max_velocity_factor(medium, f0)?)
}
