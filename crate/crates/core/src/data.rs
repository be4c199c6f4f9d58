//! Synthetic observations: a fine-level solve restricted to the
//! observation rate, plus white Gaussian noise.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::medium::{LayeredMedium, MaterialSample};
use crate::rng::SampleKey;
use crate::solver::{
    read_seismograms, simulate, write_seismograms, Geometry, Level, Seismogram, SimOptions,
    SourceSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    /// Standard deviation in m.
    Absolute(f64),
    /// Standard deviation as a fraction of the noiseless peak |u|.
    RelativeToPeak(f64),
}

/// Everything needed to regenerate a data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataMeta {
    pub seed: SampleKey,
    pub sigma: f64,
    pub rate: f64,
    pub horizon: f64,
    pub fine_level: u32,
    pub source: SourceSpec,
    pub material_digest: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSet {
    /// One trace per receiver on the observation grid `k / rate`.
    pub traces: Vec<Seismogram>,
    pub horizon: f64,
    pub sigma: f64,
    pub meta: Option<DataMeta>,
}

impl DataSet {
    /// Wraps existing traces without generation metadata.
    pub fn from_traces(traces: Vec<Seismogram>, horizon: f64, sigma: f64) -> Self {
        Self { traces, horizon, sigma, meta: None }
    }

    pub fn rate(&self) -> f64 {
        self.traces.first().map_or(0.0, |t| 1.0 / t.dt)
    }

    /// Writes `<stem>.csv` and the `<stem>.meta` sidecar.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?);
        write_seismograms(&mut w, &self.traces)?;
        w.flush()?;
        let mut m = BufWriter::new(File::create(dir.join(format!("{stem}.meta")))?);
        writeln!(m, "horizon = {}", self.horizon)?;
        writeln!(m, "sigma = {}", self.sigma)?;
        writeln!(m, "rate = {}", self.rate())?;
        if let Some(meta) = &self.meta {
            let s = &meta.source;
            writeln!(m, "seed_run = {}", meta.seed.run)?;
            writeln!(m, "seed_level = {}", meta.seed.level)?;
            writeln!(m, "seed_index = {}", meta.seed.index)?;
            writeln!(m, "fine_level = {}", meta.fine_level)?;
            writeln!(m, "source_x = {}", s.x_s)?;
            writeln!(m, "source_depth = {}", s.depth)?;
            writeln!(
                m,
                "moment = {} {} {} {}",
                s.moment[0][0], s.moment[0][1], s.moment[1][0], s.moment[1][1]
            )?;
            writeln!(m, "f0 = {}", s.f0)?;
            writeln!(m, "t_c = {}", s.t_c)?;
            writeln!(m, "t0 = {}", s.t0)?;
            writeln!(m, "material_digest = {}", meta.material_digest)?;
        }
        m.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let traces =
            read_seismograms(BufReader::new(File::open(dir.join(format!("{stem}.csv")))?))?;
        let text = std::fs::read_to_string(dir.join(format!("{stem}.meta")))?;
        let kv: BTreeMap<&str, &str> = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim(), v.trim()))
            .collect();
        let num = |k: &str| -> Result<f64> {
            kv.get(k)
                .ok_or_else(|| Error::Parse(format!("sidecar lacks {k}")))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{k}: {e}")))
        };
        let int = |k: &str| -> Result<u64> {
            kv.get(k)
                .ok_or_else(|| Error::Parse(format!("sidecar lacks {k}")))?
                .parse::<u64>()
                .map_err(|e| Error::Parse(format!("{k}: {e}")))
        };
        let horizon = num("horizon")?;
        let sigma = num("sigma")?;
        let meta = if kv.contains_key("seed_run") {
            let mt: Vec<f64> = kv
                .get("moment")
                .unwrap_or(&"")
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("moment: {e}")))?;
            if mt.len() != 4 {
                return Err(Error::Parse("moment needs four entries".into()));
            }
            Some(DataMeta {
                seed: SampleKey::new(int("seed_run")?, int("seed_level")? as u32, int("seed_index")?),
                sigma,
                rate: num("rate")?,
                horizon,
                fine_level: int("fine_level")? as u32,
                source: SourceSpec {
                    x_s: num("source_x")?,
                    depth: num("source_depth")?,
                    moment: [[mt[0], mt[1]], [mt[2], mt[3]]],
                    f0: num("f0")?,
                    t_c: num("t_c")?,
                    t0: num("t0")?,
                    horizon,
                },
                material_digest: kv.get("material_digest").unwrap_or(&"").to_string(),
            })
        } else {
            None
        };
        Ok(Self { traces, horizon, sigma, meta })
    }
}

/// Restricts simulated traces to observation times `k / rate`,
/// `k = 0..=rate * horizon`.
pub fn restrict(sim: &[Seismogram], rate: f64, horizon: f64) -> Result<Vec<Seismogram>> {
    let whole = |x: f64, what: &str| -> Result<usize> {
        let r = x.round();
        if r < 0.0 || (x - r).abs() > 1e-6 {
            return Err(Error::GridMismatch(format!("{what} is not a whole number ({x})")));
        }
        Ok(r as usize)
    };
    sim.iter()
        .map(|s| {
            let start = whole(-s.t0 / s.dt, "offset of t = 0")?;
            let stride = whole(1.0 / (rate * s.dt), "simulation steps per observation")?;
            let count = whole(horizon * rate, "observations per horizon")? + 1;
            if stride == 0 || start + (count - 1) * stride >= s.len() {
                return Err(Error::GridMismatch("simulation too short for the observations".into()));
            }
            let mut d = s.subsample(start, stride);
            d.t0 = 0.0;
            d.dt = 1.0 / rate;
            d.ux.truncate(count);
            d.uz.truncate(count);
            Ok(d)
        })
        .collect()
}

/// Adds i.i.d. `N(0, sigma^2)` noise to both components of every trace.
pub fn add_noise(traces: &mut [Seismogram], sigma: f64, key: SampleKey) {
    let mut rng = key.rng();
    for t in traces {
        for v in t.ux.iter_mut().chain(t.uz.iter_mut()) {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * e;
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthSpec<'a> {
    pub source: &'a SourceSpec,
    pub material: &'a MaterialSample,
    pub medium: &'a LayeredMedium,
    pub geometry: &'a Geometry,
    pub fine: Level,
    pub opts: SimOptions,
    pub rate: f64,
    pub noise: Noise,
    pub seed: SampleKey,
    /// Finest level any estimator will use.
    pub hierarchy_max: u32,
}

/// Solves at the fine level, restricts to the observation rate and adds
/// noise.
pub fn generate_synthetic(spec: &SynthSpec<'_>) -> Result<DataSet> {
    if spec.fine.index <= spec.hierarchy_max {
        return Err(invalid(format!(
            "data level {} must be finer than the hierarchy maximum {}",
            spec.fine.index, spec.hierarchy_max
        )));
    }
    if !(spec.rate > 0.0) {
        return Err(invalid("observation rate must be positive"));
    }
    let sim = simulate(spec.material, spec.medium, spec.source, spec.geometry, &spec.fine, &spec.opts)?;
    let horizon = spec.source.horizon;
    let mut traces = restrict(&sim, spec.rate, horizon)?;
    let sigma = match spec.noise {
        Noise::Absolute(s) => s,
        Noise::RelativeToPeak(f) => f * traces.iter().map(Seismogram::max_abs).fold(0.0, f64::max),
    };
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid("noise level must be finite and nonnegative"));
    }
    add_noise(&mut traces, sigma, spec.seed);
    Ok(DataSet {
        traces,
        horizon,
        sigma,
        meta: Some(DataMeta {
            seed: spec.seed,
            sigma,
            rate: spec.rate,
            horizon,
            fine_level: spec.fine.index,
            source: *spec.source,
            material_digest: spec.material.digest(),
        }),
    })
}
