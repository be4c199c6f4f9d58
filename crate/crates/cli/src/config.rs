//! Run configuration read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use seismlmc::calibrate::{Bootstrap, Rates};
use seismlmc::data::Noise;
use seismlmc::medium::{LayeredMedium, MaterialSample, UncertaintySpec};
use seismlmc::plan::tolerance_schedule;
use seismlmc::presets;
use seismlmc::qoi::QoiKind;
use seismlmc::solver::{required_padding, Discretization, Geometry, SimOptions, SourceSpec};
use seismlmc::surrogate::SurrogateSpec;
use seismlmc::{Error, Result};

pub const WORKERS_ENV: &str = "MLMC_SEIS_WORKERS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Solver,
    Surrogate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hierarchy {
    pub h0: f64,
    pub dt0: f64,
    pub c_cfl: f64,
    pub l_max: u32,
}

impl Hierarchy {
    pub fn discretization(&self) -> Discretization {
        Discretization { h0: self.h0, dt0: self.dt0, c_cfl: self.c_cfl }
    }
}

/// How the synthetic observations are produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Horizontal source coordinate of the data, m.
    pub source_x: f64,
    /// Receiver offsets from the data source, m.
    pub offsets: Vec<f64>,
    pub material: MaterialSample,
    pub rate: f64,
    pub noise: Noise,
    pub level: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    /// Samples per level, level 0 first.
    pub counts: Vec<u64>,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
    #[serde(default = "default_coverage")]
    pub coverage: f64,
}

fn default_resamples() -> usize {
    seismlmc::estimators::BOOTSTRAP_RESAMPLES
}

fn default_coverage() -> f64 {
    0.95
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tolerances {
    Schedule { first: f64, count: usize },
    List(Vec<f64>),
}

impl Tolerances {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Tolerances::Schedule { first, count } => tolerance_schedule(*first, *count),
            Tolerances::List(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub c_alpha: f64,
    pub tolerances: Tolerances,
    /// MC estimators predicted to cost more than this many seconds are
    /// planned but not run.
    #[serde(default = "default_mc_budget")]
    pub mc_budget: f64,
    /// Bootstrap replicates of each MLMC estimate drawn from the pooled
    /// samples.
    #[serde(default = "default_replicates")]
    pub bootstrap_replicates: usize,
}

fn default_mc_budget() -> f64 {
    f64::INFINITY
}

fn default_replicates() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttenuationCompare {
    pub material: MaterialSample,
    pub levels: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelKind,
    pub qoi: QoiKind,
    /// Output directory, relative to the configuration file.
    pub output: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub seed: u64,
    pub medium: LayeredMedium,
    pub uncertainty: UncertaintySpec,
    pub source: SourceSpec,
    pub geometry: Geometry,
    pub hierarchy: Hierarchy,
    #[serde(default)]
    pub solver: SimOptions,
    pub data: DataConfig,
    pub verification: Verification,
    pub rates: Rates,
    pub study: Study,
    pub attenuation_compare: AttenuationCompare,
    #[serde(default)]
    pub surrogate: SurrogateSpec,
}

fn default_workers() -> usize {
    1
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if cfg.output.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.output = base.join(&cfg.output);
        }
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            cfg.workers = v
                .parse()
                .map_err(|_| Error::Parse(format!("{WORKERS_ENV}={v:?} is not a worker count")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        self.uncertainty.validate()?;
        self.source.validate()?;
        self.data_source().validate()?;
        self.geometry.validate()?;
        self.data_geometry().validate()?;
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.verification.counts.len() < 2 {
            return bad("verification needs at least two levels".into());
        }
        if self.verification.counts.len() as u32 - 1 > self.hierarchy.l_max {
            return bad("verification levels exceed l_max".into());
        }
        if !(self.study.c_alpha > 0.0) || self.study.tolerances.values().iter().any(|t| !(*t > 0.0)) {
            return bad("C_alpha and tolerances must be positive".into());
        }
        if self.model == ModelKind::Surrogate {
            return self.surrogate.validate();
        }
        if self.data.material.len() != self.medium.len() || self.attenuation_compare.material.len() != self.medium.len() {
            return bad("fixed materials must have one entry per layer".into());
        }
        if self.data.level <= self.hierarchy.l_max {
            return bad(format!("data level {} must exceed l_max {}", self.data.level, self.hierarchy.l_max));
        }
        // observation times must lie on every level's grid
        let steps = 1.0 / (self.data.rate * self.hierarchy.dt0);
        if !(self.data.rate > 0.0) || (steps - steps.round()).abs() > 1e-9 || steps.round() < 1.0 {
            return bad(format!("dt0 = {} s is not commensurate with {} Hz", self.hierarchy.dt0, self.data.rate));
        }
        let pad = required_padding(&self.uncertainty, &self.medium, self.source.horizon, self.source.f0);
        if self.geometry.pad_x < pad || self.geometry.pad_z < pad {
            return bad(format!("domain pads must be at least {pad:.0} m"));
        }
        self.hierarchy.discretization().check_hierarchy(
            &self.medium,
            &self.uncertainty,
            &self.solver,
            self.source.f0,
            self.hierarchy.l_max,
        )
    }

    pub fn data_source(&self) -> SourceSpec {
        SourceSpec { x_s: self.data.source_x, ..self.source }
    }

    pub fn data_geometry(&self) -> Geometry {
        Geometry { offsets: self.data.offsets.clone(), ..self.geometry.clone() }
    }

    pub fn bootstrap(&self) -> Bootstrap {
        Bootstrap {
            resamples: self.verification.resamples,
            coverage: self.verification.coverage,
            seed: seismlmc::rng::derive_run(self.seed, "bootstrap", 0),
        }
    }

    /// SHA-256 of everything that influences sample values. Study,
    /// calibration and output settings are left out so that stored samples
    /// stay reusable when only those change.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        c.workers = 1;
        c.study = Study { bootstrap_replicates: 0, mc_budget: 0.0, tolerances: Tolerances::List(vec![]), c_alpha: 0.0 };
        c.verification = Verification { counts: vec![], resamples: 0, coverage: 0.0 };
        c.rates = Rates { gamma: 0.0, q_w: 0.0, q_s: 0.0 };
        c.attenuation_compare.levels.clear();
        let bytes = serde_json::to_vec(&c).expect("configuration serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Small crustal problem that runs on one core.
    pub fn desk(qoi: QoiKind) -> Self {
        let source = presets::desk_source();
        let data_source = presets::desk_data_source();
        RunConfig {
            model: ModelKind::Solver,
            qoi,
            output: PathBuf::from(format!("out-desk-{}", qoi.label())),
            workers: 1,
            seed: 20_240_601,
            medium: presets::desk_medium(),
            uncertainty: presets::paper_uncertainty(),
            source,
            geometry: presets::desk_geometry(),
            hierarchy: Hierarchy { h0: 1000.0, dt0: 0.04, c_cfl: 0.45, l_max: 3 },
            solver: SimOptions::default(),
            data: DataConfig {
                source_x: data_source.x_s,
                offsets: presets::desk_data_geometry().offsets,
                material: presets::data_sample(),
                rate: presets::DESK_RATE,
                noise: Noise::RelativeToPeak(presets::DESK_SIGMA_FRACTION),
                level: 5,
            },
            verification: Verification { counts: vec![80, 40, 20, 10], resamples: 1000, coverage: 0.95 },
            rates: Rates { gamma: 3.0, q_w: 2.0, q_s: 4.0 },
            study: Study {
                c_alpha: 2.0,
                tolerances: Tolerances::Schedule { first: if qoi == QoiKind::L2 { 4e-3 } else { 1e-2 }, count: 5 },
                mc_budget: 600.0,
                bootstrap_replicates: 100,
            },
            attenuation_compare: AttenuationCompare { material: presets::attenuation_sample(), levels: vec![0, 1, 2] },
            surrogate: SurrogateSpec::default(),
        }
    }

    /// Full-size problem.
    pub fn paper(qoi: QoiKind) -> Self {
        let d = presets::paper_discretization();
        RunConfig {
            output: PathBuf::from(format!("out-paper-{}", qoi.label())),
            source: presets::paper_source(),
            medium: presets::paper_medium(),
            geometry: presets::paper_geometry(),
            hierarchy: Hierarchy { h0: d.h0, dt0: d.dt0, c_cfl: d.c_cfl, l_max: 3 },
            data: DataConfig {
                source_x: presets::paper_data_source().x_s,
                offsets: presets::paper_data_geometry().offsets,
                material: presets::data_sample(),
                rate: presets::PAPER_RATE,
                noise: Noise::Absolute(presets::PAPER_SIGMA),
                level: 5,
            },
            verification: Verification { counts: vec![160, 160, 40, 10], resamples: 1000, coverage: 0.95 },
            study: Study {
                c_alpha: 2.0,
                tolerances: Tolerances::Schedule { first: if qoi == QoiKind::L2 { 4.65e-4 } else { 1.92e-2 }, count: 6 },
                mc_budget: f64::INFINITY,
                bootstrap_replicates: 100,
            },
            ..Self::desk(qoi)
        }
    }

    /// Surrogate model in place of the solver.
    pub fn surrogate() -> Self {
        RunConfig {
            model: ModelKind::Surrogate,
            output: PathBuf::from("out-surrogate"),
            hierarchy: Hierarchy { l_max: 12, ..Self::desk(QoiKind::L2).hierarchy },
            verification: Verification { counts: vec![200, 200, 200, 200], resamples: 1000, coverage: 0.95 },
            study: Study {
                c_alpha: 2.0,
                tolerances: Tolerances::Schedule { first: 0.1, count: 8 },
                mc_budget: f64::INFINITY,
                bootstrap_replicates: 100,
            },
            ..Self::desk(QoiKind::L2)
        }
    }
}
