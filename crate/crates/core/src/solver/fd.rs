//! Staggered-grid time stepping.
//!
//! Node layout (i along x, j along depth, spacing h):
//! `sxx`, `szz` at `(i, j)`, `vx` at `(i+1/2, j)`, `vz` at `(i, j+1/2)`,
//! `sxz` at `(i+1/2, j+1/2)`. Velocities live at half time steps and
//! stresses at whole steps. Row `j = 0` is the free surface, handled by
//! stress imaging; the other three sides are rigid with a sponge inside.

use super::{sample_vp_max, Geometry, Level, Seismogram, SimOptions, SourceSpec};
use crate::error::{invalid, Error, Result};
use crate::medium::{LayeredMedium, MaterialSample};
use crate::solver::fit_sls;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridShape {
    pub nx_cells: usize,
    pub nz_cells: usize,
    pub steps: usize,
}

impl GridShape {
    pub fn cells(&self) -> usize {
        self.nx_cells * self.nz_cells
    }
}

struct Frame {
    shape: GridShape,
    x_min: f64,
}

fn frame(source: &SourceSpec, geom: &Geometry, level: &Level) -> Result<Frame> {
    source.validate()?;
    geom.validate()?;
    let h0 = level.h0();
    let lo = geom.offsets.iter().fold(0.0f64, |a, &o| a.min(o)) - geom.pad_x;
    let hi = geom.offsets.iter().fold(0.0f64, |a, &o| a.max(o)) + geom.pad_x;
    let zmax = source.depth.max(geom.receiver_depth) + geom.pad_z;
    let k_lo = (lo / h0 - 1e-9).floor();
    let k_hi = (hi / h0 + 1e-9).ceil();
    let k_z = (zmax / h0 - 1e-9).ceil();
    let refine = 1usize << level.index;
    let span = (source.horizon - source.t0) / level.dt;
    let steps = span.round();
    if (span - steps).abs() > 1e-6 * span.max(1.0) {
        return Err(invalid(format!(
            "time span {} s is not a whole number of steps of {} s",
            source.horizon - source.t0,
            level.dt
        )));
    }
    Ok(Frame {
        shape: GridShape {
            nx_cells: (k_hi - k_lo) as usize * refine,
            nz_cells: k_z as usize * refine,
            steps: steps as usize,
        },
        x_min: source.x_s + k_lo * h0,
    })
}

/// Cell and step counts of the grid used at `level`.
pub fn grid_shape(source: &SourceSpec, geom: &Geometry, level: &Level) -> Result<GridShape> {
    Ok(frame(source, geom, level)?.shape)
}

/// Bilinear stencil: base indices and weights along x and z.
#[derive(Clone, Copy, Debug)]
struct Stencil {
    i: isize,
    j: isize,
    wx: f64,
    wz: f64,
}

impl Stencil {
    fn at(gx: f64, gz: f64) -> Self {
        let (fi, fj) = (gx.floor(), gz.floor());
        Stencil { i: fi as isize, j: fj as isize, wx: gx - fi, wz: gz - fj }
    }

    fn taps(&self) -> [(isize, isize, f64); 4] {
        let (i, j, a, b) = (self.i, self.j, self.wx, self.wz);
        [
            (i, j, (1.0 - a) * (1.0 - b)),
            (i + 1, j, a * (1.0 - b)),
            (i, j + 1, (1.0 - a) * b),
            (i + 1, j + 1, a * b),
        ]
    }
}

/// One forward solve in progress.
pub struct Simulation {
    nx: usize,
    nz: usize,
    h: f64,
    dt: f64,
    steps: usize,
    step: usize,
    t0: f64,
    level: u32,
    vx: Vec<f64>,
    vz: Vec<f64>,
    sxx: Vec<f64>,
    szz: Vec<f64>,
    sxz: Vec<f64>,
    // per-row material: integer rows (len nz) and half rows (len nz - 1)
    bx: Vec<f64>,
    bz: Vec<f64>,
    lam: Vec<f64>,
    l2m: Vec<f64>,
    mu_h: Vec<f64>,
    surf: f64,
    surf_ratio: f64,
    rho_i: Vec<f64>,
    // attenuation
    mem: Option<Memory>,
    // sponge factors
    fx_i: Vec<f64>,
    fx_h: Vec<f64>,
    fz_i: Vec<f64>,
    fz_h: Vec<f64>,
    // source
    src_n: Vec<(usize, f64, f64)>,
    src_s: Vec<(usize, f64)>,
    source: SourceSpec,
    // receivers
    rec_vx: Vec<Stencil>,
    rec_vz: Vec<Stencil>,
    ux: Vec<Vec<f64>>,
    uz: Vec<Vec<f64>>,
}

struct Memory {
    a: Vec<f64>,
    c: Vec<f64>,
    y_i: Vec<Vec<f64>>,
    y_h: Vec<Vec<f64>>,
    rxx: Vec<f64>,
    rzz: Vec<f64>,
    rxz: Vec<f64>,
}

fn sponge_profile(n: usize, offset: f64, h: f64, width: f64, d_max: f64, dt: f64, sides: (bool, bool)) -> Vec<f64> {
    let len = (n as f64 - 1.0) * h;
    (0..n)
        .map(|k| {
            let p = (k as f64 + offset) * h;
            let mut s: f64 = 0.0;
            if sides.0 {
                s = s.max(width - p);
            }
            if sides.1 {
                s = s.max(p - (len - width));
            }
            if s <= 0.0 {
                1.0
            } else {
                let r = (s / width).min(1.0);
                (-d_max * r * r * dt).exp()
            }
        })
        .collect()
}

impl Simulation {
    pub fn new(
        sample: &MaterialSample,
        medium: &LayeredMedium,
        source: &SourceSpec,
        geom: &Geometry,
        level: &Level,
        opts: &SimOptions,
    ) -> Result<Self> {
        if sample.len() != medium.len() {
            return Err(invalid("sample and medium have different layer counts"));
        }
        let fr = frame(source, geom, level)?;
        let vp_max = sample_vp_max(sample, medium, opts, source.f0)?;
        // the plain staggered scheme is stable up to 1/sqrt(2); configured
        // CFL factors are enforced at plan time
        level.check_stability(vp_max, std::f64::consts::FRAC_1_SQRT_2)?;

        let (h, dt) = (level.h, level.dt);
        let nx = fr.shape.nx_cells + 1;
        let nz = fr.shape.nz_cells + 1;
        let width = opts.sponge_cells as f64 * level.h0();
        if width > geom.pad_x + 1e-9 || width > geom.pad_z + 1e-9 {
            return Err(invalid(format!("sponge width {width} m exceeds the domain pads")));
        }

        // layer properties, with unrelaxed stiffening under attenuation
        let band = source.attenuation_band();
        let mut factor = vec![1.0; medium.len()];
        let mut ys: Vec<Vec<f64>> = vec![vec![0.0; opts.mechanisms]; medium.len()];
        let mut omega = Vec::new();
        if opts.attenuation {
            for (k, l) in medium.layers().iter().enumerate() {
                let c = fit_sls(l.q_factor, opts.mechanisms, band)?;
                factor[k] = c.unrelaxed_factor();
                ys[k] = c.memory_weights();
                omega = c.omega.clone();
            }
        }
        let props = |z: f64| {
            let k = medium.layer_index(z);
            let rho = sample.rho[k];
            let m = rho * sample.vp[k].powi(2) * factor[k];
            let mu = rho * sample.vs[k].powi(2) * factor[k];
            (k, rho, m - 2.0 * mu, m, mu)
        };
        let zi = |j: usize| j as f64 * h;
        let zh = |j: usize| (j as f64 + 0.5) * h;
        let bx: Vec<f64> = (0..nz).map(|j| 1.0 / props(zi(j)).1).collect();
        let rho_i: Vec<f64> = (0..nz).map(|j| props(zi(j)).1).collect();
        let bz: Vec<f64> = (0..nz - 1).map(|j| 1.0 / props(zh(j)).1).collect();
        let lam: Vec<f64> = (0..nz).map(|j| props(zi(j)).2).collect();
        let l2m: Vec<f64> = (0..nz).map(|j| props(zi(j)).3).collect();
        let mu_h: Vec<f64> = (0..nz - 1).map(|j| props(zh(j)).4).collect();
        let surf = l2m[0] - lam[0] * lam[0] / l2m[0];
        let surf_ratio = lam[0] / l2m[0];

        let mem = if opts.attenuation {
            let a = omega.iter().map(|w| (1.0 - 0.5 * w * dt) / (1.0 + 0.5 * w * dt)).collect();
            let c = omega.iter().map(|w| dt * w / (1.0 + 0.5 * w * dt)).collect();
            let y_i = (0..nz).map(|j| ys[props(zi(j)).0].clone()).collect();
            let y_h = (0..nz - 1).map(|j| ys[props(zh(j)).0].clone()).collect();
            let b = opts.mechanisms;
            Some(Memory {
                a,
                c,
                y_i,
                y_h,
                rxx: vec![0.0; nx * nz * b],
                rzz: vec![0.0; nx * nz * b],
                rxz: vec![0.0; (nx - 1) * (nz - 1) * b],
            })
        } else {
            None
        };

        let ln_r = (1.0 / opts.sponge_reflection).ln();
        let d_max = 3.0 * vp_max * ln_r / (2.0 * width);
        let fx_i = sponge_profile(nx, 0.0, h, width, d_max, dt, (true, true));
        let fx_h = sponge_profile(nx - 1, 0.5, h, width, d_max, dt, (true, true));
        let fz_i = sponge_profile(nz, 0.0, h, width, d_max, dt, (false, true));
        let fz_h = sponge_profile(nz - 1, 0.5, h, width, d_max, dt, (false, true));

        // moment-tensor injection: normal terms on integer nodes, shear on
        // half nodes, bilinear weights scaled to a discrete delta
        let gx = (source.x_s - fr.x_min) / h;
        let gz = source.depth / h;
        let area = h * h;
        let mut src_n = Vec::new();
        for (i, j, w) in Stencil::at(gx, gz).taps() {
            if w != 0.0 && i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < nz {
                let k = j as usize * nx + i as usize;
                src_n.push((k, source.moment[0][0] * w / area, source.moment[1][1] * w / area));
            }
        }
        let mut src_s = Vec::new();
        for (i, j, w) in Stencil::at(gx - 0.5, gz - 0.5).taps() {
            if w != 0.0 && i >= 0 && j >= 0 && (i as usize) < nx - 1 && (j as usize) < nz - 1 {
                let k = j as usize * (nx - 1) + i as usize;
                src_s.push((k, source.moment[0][1] * w / area));
            }
        }

        let mut rec_vx = Vec::new();
        let mut rec_vz = Vec::new();
        for &off in &geom.offsets {
            let rx = (source.x_s + off - fr.x_min) / h;
            let rz = geom.receiver_depth / h;
            let sx = Stencil::at(rx - 0.5, rz);
            let sz = Stencil::at(rx, rz - 0.5);
            let inside = sx.i >= 0
                && (sx.i as usize + 1) < nx - 1
                && (sx.j as usize + 1) < nz
                && sz.i >= 0
                && (sz.i as usize + 1) < nx
                && (sz.j + 1) < (nz as isize - 1);
            if !inside {
                return Err(invalid(format!("receiver at offset {off} m lies outside the grid")));
            }
            rec_vx.push(sx);
            rec_vz.push(sz);
        }

        let nrec = geom.offsets.len();
        let steps = fr.shape.steps;
        let mut sim = Simulation {
            nx,
            nz,
            h,
            dt,
            steps,
            step: 0,
            t0: source.t0,
            level: level.index,
            vx: vec![0.0; (nx - 1) * nz],
            vz: vec![0.0; nx * (nz - 1)],
            sxx: vec![0.0; nx * nz],
            szz: vec![0.0; nx * nz],
            sxz: vec![0.0; (nx - 1) * (nz - 1)],
            bx,
            bz,
            lam,
            l2m,
            mu_h,
            surf,
            surf_ratio,
            rho_i,
            mem,
            fx_i,
            fx_h,
            fz_i,
            fz_h,
            src_n,
            src_s,
            source: *source,
            rec_vx,
            rec_vz,
            ux: vec![Vec::with_capacity(steps + 1); nrec],
            uz: vec![Vec::with_capacity(steps + 1); nrec],
        };
        sim.inject(source.stf(source.t0));
        for r in 0..nrec {
            sim.ux[r].push(0.0);
            sim.uz[r].push(0.0);
        }
        Ok(sim)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn current_step(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.t0 + self.step as f64 * self.dt
    }

    fn inject(&mut self, ds: f64) {
        let nz_row = self.nx;
        for &(k, mxx, mzz) in &self.src_n {
            self.sxx[k] -= mxx * ds;
            if k >= nz_row {
                self.szz[k] -= mzz * ds;
            }
        }
        for &(k, mxz) in &self.src_s {
            self.sxz[k] -= mxz * ds;
        }
    }

    fn update_velocity(&mut self) {
        let (nx, nz) = (self.nx, self.nz);
        let r = self.dt / self.h;
        let nxh = nx - 1;
        for j in 0..nz {
            let b = self.bx[j] * r;
            let sxx = &self.sxx[j * nx..(j + 1) * nx];
            let up: Option<&[f64]> = (j < nz - 1).then(|| &self.sxz[j * nxh..(j + 1) * nxh]);
            let down: Option<&[f64]> = (j > 0).then(|| &self.sxz[(j - 1) * nxh..j * nxh]);
            let vx = &mut self.vx[j * nxh..(j + 1) * nxh];
            for i in 0..nxh {
                let below = up.map_or(0.0, |s| s[i]);
                let above = match down {
                    Some(s) => s[i],
                    None => -below,
                };
                vx[i] += b * (sxx[i + 1] - sxx[i] + below - above);
            }
        }
        for j in 0..nz - 1 {
            let b = self.bz[j] * r;
            let szz0 = &self.szz[j * nx..(j + 1) * nx];
            let szz1 = &self.szz[(j + 1) * nx..(j + 2) * nx];
            let sxz = &self.sxz[j * nxh..(j + 1) * nxh];
            let vz = &mut self.vz[j * nx..(j + 1) * nx];
            vz[0] += b * (sxz[0] + szz1[0] - szz0[0]);
            for i in 1..nxh {
                vz[i] += b * (sxz[i] - sxz[i - 1] + szz1[i] - szz0[i]);
            }
            vz[nxh] += b * (-sxz[nxh - 1] + szz1[nxh] - szz0[nxh]);
        }
    }

    fn update_stress(&mut self) {
        let (nx, nz) = (self.nx, self.nz);
        let nxh = nx - 1;
        let (dt, ih) = (self.dt, 1.0 / self.h);
        let mut exx = vec![0.0; nx];
        let mut rx = vec![0.0; nx];
        let mut rz = vec![0.0; nx];
        for j in 0..nz {
            let vx = &self.vx[j * nxh..(j + 1) * nxh];
            exx[0] = vx[0] * ih;
            for i in 1..nxh {
                exx[i] = (vx[i] - vx[i - 1]) * ih;
            }
            exx[nxh] = -vx[nxh - 1] * ih;
            let k0 = j * nx;
            if j == 0 {
                for i in 0..nx {
                    rx[i] = self.surf * exx[i];
                }
            } else {
                let (lam, l2m) = (self.lam[j], self.l2m[j]);
                let top = &self.vz[(j - 1) * nx..j * nx];
                let bot = (j < nz - 1).then(|| &self.vz[j * nx..(j + 1) * nx]);
                for i in 0..nx {
                    let ezz = (bot.map_or(0.0, |b| b[i]) - top[i]) * ih;
                    rx[i] = l2m * exx[i] + lam * ezz;
                    rz[i] = lam * exx[i] + l2m * ezz;
                }
            }
            if let Some(m) = self.mem.as_mut() {
                let nb = m.a.len();
                let y = &m.y_i[j];
                relax_row(&mut rx, &mut m.rxx[k0 * nb..(k0 + nx) * nb], y, &m.a, &m.c);
                if j > 0 {
                    relax_row(&mut rz, &mut m.rzz[k0 * nb..(k0 + nx) * nb], y, &m.a, &m.c);
                }
            }
            for (s, r) in self.sxx[k0..k0 + nx].iter_mut().zip(&rx) {
                *s += dt * r;
            }
            if j > 0 {
                for (s, r) in self.szz[k0..k0 + nx].iter_mut().zip(&rz) {
                    *s += dt * r;
                }
            }
        }
        let mut rs = vec![0.0; nxh];
        for j in 0..nz - 1 {
            let mu = self.mu_h[j] * ih;
            let vx0 = &self.vx[j * nxh..(j + 1) * nxh];
            let vx1 = &self.vx[(j + 1) * nxh..(j + 2) * nxh];
            let vz = &self.vz[j * nx..(j + 1) * nx];
            for i in 0..nxh {
                rs[i] = mu * (vx1[i] - vx0[i] + vz[i + 1] - vz[i]);
            }
            let k0 = j * nxh;
            if let Some(m) = self.mem.as_mut() {
                let nb = m.a.len();
                relax_row(&mut rs, &mut m.rxz[k0 * nb..(k0 + nxh) * nb], &m.y_h[j], &m.a, &m.c);
            }
            for (s, r) in self.sxz[k0..k0 + nxh].iter_mut().zip(&rs) {
                *s += dt * r;
            }
        }
    }

    fn vz_at(&self, i: isize, j: isize) -> f64 {
        let (i, nx) = (i as usize, self.nx);
        if j >= 0 {
            return self.vz[j as usize * nx + i];
        }
        // ghost row above the surface from the zero-traction condition
        let nxh = nx - 1;
        let left = if i > 0 { self.vx[i - 1] } else { 0.0 };
        let right = if i < nxh { self.vx[i] } else { 0.0 };
        self.vz[i] + self.surf_ratio * (right - left)
    }

    fn record(&mut self) {
        let nxh = self.nx - 1;
        for r in 0..self.rec_vx.len() {
            let mut vx = 0.0;
            for (i, j, w) in self.rec_vx[r].taps() {
                if w != 0.0 {
                    vx += w * self.vx[j as usize * nxh + i as usize];
                }
            }
            let mut vz = 0.0;
            for (i, j, w) in self.rec_vz[r].taps() {
                if w != 0.0 {
                    vz += w * self.vz_at(i, j);
                }
            }
            let ux = self.ux[r].last().copied().unwrap_or(0.0) + self.dt * vx;
            let uz = self.uz[r].last().copied().unwrap_or(0.0) + self.dt * vz;
            self.ux[r].push(ux);
            self.uz[r].push(uz);
        }
    }

    /// Advances one time step.
    pub fn advance(&mut self) -> Result<()> {
        let t = self.time();
        self.update_velocity();
        self.damp_velocity_only();
        self.update_stress();
        let ds = self.source.stf(t + self.dt) - self.source.stf(t);
        self.inject(ds);
        self.damp_stress_only();
        self.record();
        self.step += 1;
        let bad = self.ux.iter().chain(&self.uz).any(|u| !u.last().is_some_and(|v| v.is_finite()));
        if bad || (self.step % 64 == 0 && !self.fields_finite()) {
            return Err(Error::BlowUp { level: self.level, step: self.step });
        }
        Ok(())
    }

    fn damp_velocity_only(&mut self) {
        let nxh = self.nx - 1;
        damp_field(&mut self.vx, &self.fx_h, &self.fz_i, nxh);
        damp_field(&mut self.vz, &self.fx_i, &self.fz_h, self.nx);
    }

    fn damp_stress_only(&mut self) {
        let nxh = self.nx - 1;
        damp_field(&mut self.sxx, &self.fx_i, &self.fz_i, self.nx);
        damp_field(&mut self.szz, &self.fx_i, &self.fz_i, self.nx);
        damp_field(&mut self.sxz, &self.fx_h, &self.fz_h, nxh);
    }

    fn fields_finite(&self) -> bool {
        [&self.vx, &self.vz, &self.sxx, &self.szz, &self.sxz]
            .iter()
            .all(|f| f.iter().all(|v| v.is_finite()))
    }

    /// Discrete elastic energy (kinetic plus strain) per unit length
    /// out of plane, using unrelaxed moduli.
    pub fn energy(&self) -> f64 {
        let (nx, nz) = (self.nx, self.nz);
        let nxh = nx - 1;
        let mut e = 0.0;
        for j in 0..nz {
            let rho = self.rho_i[j];
            for i in 0..nxh {
                e += 0.5 * rho * self.vx[j * nxh + i].powi(2);
            }
            let (lam, l2m) = (self.lam[j], self.l2m[j]);
            let mu = 0.5 * (l2m - lam);
            let den = 8.0 * mu * (lam + mu);
            for i in 0..nx {
                let (a, b) = (self.sxx[j * nx + i], self.szz[j * nx + i]);
                e += (l2m * (a * a + b * b) - 2.0 * lam * a * b) / den;
            }
        }
        for j in 0..nz - 1 {
            let rho = 1.0 / self.bz[j];
            for i in 0..nx {
                e += 0.5 * rho * self.vz[j * nx + i].powi(2);
            }
            let mu = self.mu_h[j];
            for i in 0..nxh {
                e += self.sxz[j * nxh + i].powi(2) / (2.0 * mu);
            }
        }
        e * self.h * self.h
    }

    /// Runs the remaining steps and returns one seismogram per receiver.
    pub fn run(mut self) -> Result<Vec<Seismogram>> {
        while self.step < self.steps {
            self.advance()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> Vec<Seismogram> {
        let (t0, dt) = (self.t0, self.dt);
        self.ux
            .into_iter()
            .zip(self.uz)
            .enumerate()
            .map(|(receiver, (ux, uz))| Seismogram { receiver, t0, dt, ux, uz })
            .collect()
    }
}

/// Replaces each stress rate by its relaxed value and advances the memory
/// variables (stored node-major, `nb` per node) by a Crank-Nicolson step.
fn relax_row(rate: &mut [f64], r: &mut [f64], y: &[f64], a: &[f64], c: &[f64]) {
    let nb = a.len();
    let cy: Vec<f64> = c.iter().zip(y).map(|(c, y)| c * y).collect();
    for (s, node) in rate.iter_mut().zip(r.chunks_exact_mut(nb)) {
        let mut acc = 0.0;
        for b in 0..nb {
            let old = node[b];
            let new = a[b] * old + cy[b] * *s;
            node[b] = new;
            acc += old + new;
        }
        *s -= 0.5 * acc;
    }
}

fn damp_field(f: &mut [f64], fx: &[f64], fz: &[f64], nx: usize) {
    let left = fx.iter().take_while(|&&v| v < 1.0).count();
    let right = fx.iter().rev().take_while(|&&v| v < 1.0).count();
    for (j, row) in f.chunks_exact_mut(nx).enumerate() {
        let gz = fz[j];
        if gz < 1.0 {
            for (v, g) in row.iter_mut().zip(fx) {
                *v *= g * gz;
            }
        } else {
            for i in (0..left).chain(nx - right..nx) {
                row[i] *= fx[i];
            }
        }
    }
}

/// Propagates waves through `sample` and records displacement at the
/// receivers of `geom` on the level's time grid over `[t0, horizon]`.
pub fn simulate(
    sample: &MaterialSample,
    medium: &LayeredMedium,
    source: &SourceSpec,
    geom: &Geometry,
    level: &Level,
    opts: &SimOptions,
) -> Result<Vec<Seismogram>> {
    Simulation::new(sample, medium, source, geom, level, opts)?.run()
}
