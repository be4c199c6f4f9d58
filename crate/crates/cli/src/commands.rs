//! The subcommands, as library functions.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seismlmc::calibrate::{run_verification, RateModels};
use seismlmc::data::{generate_synthetic, DataSet, SynthSpec};
use seismlmc::estimators::{
    mlmc_estimate, mlmc_estimator_variance, plan_work, quantile_sorted, run_samples, PoolStore,
    Provenance, SampleKind, SampleModel, SamplePool,
};
use seismlmc::model::{SurrogateModel, WaveModel};
use seismlmc::plan::{select_hierarchy, select_mc, Plan, PlanKind};
use seismlmc::qoi::QoiKind;
use seismlmc::rng::{derive_run, SampleKey};
use seismlmc::solver::simulate;
use seismlmc::{Error, Result};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ModelKind, RunConfig};

pub const DATA_STEM: &str = "data";

pub fn data_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output.join("data")
}

pub fn calibration_path(cfg: &RunConfig) -> PathBuf {
    cfg.output.join("verify").join("calibration.json")
}

pub fn study_path(cfg: &RunConfig) -> PathBuf {
    cfg.output.join("run").join("study.json")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Invalid(format!("cannot read {what} {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Solves the data configuration at its fine level and writes the noisy
/// observations.
pub fn cmd_synth(cfg: &RunConfig) -> Result<DataSet> {
    if cfg.model == ModelKind::Surrogate {
        return Err(Error::Invalid("the surrogate model uses no data".into()));
    }
    let source = cfg.data_source();
    let geometry = cfg.data_geometry();
    let data = generate_synthetic(&SynthSpec {
        source: &source,
        material: &cfg.data.material,
        medium: &cfg.medium,
        geometry: &geometry,
        fine: cfg.hierarchy.discretization().level(cfg.data.level),
        opts: cfg.solver,
        rate: cfg.data.rate,
        noise: cfg.data.noise,
        seed: SampleKey::new(derive_run(cfg.seed, "data", 0), cfg.data.level, 0),
        hierarchy_max: cfg.hierarchy.l_max,
    })?;
    data.save(&data_dir(cfg), DATA_STEM)?;
    Ok(data)
}

pub fn load_data(cfg: &RunConfig) -> Result<DataSet> {
    let dir = data_dir(cfg);
    if !dir.join(format!("{DATA_STEM}.csv")).exists() {
        return Err(Error::Invalid(format!("no data in {}; run `synth` first", dir.display())));
    }
    DataSet::load(&dir, DATA_STEM)
}

/// Forward model plus QoI described by the configuration.
pub fn build_model(cfg: &RunConfig) -> Result<Box<dyn SampleModel>> {
    Ok(match cfg.model {
        ModelKind::Surrogate => Box::new(SurrogateModel(cfg.surrogate)),
        ModelKind::Solver => Box::new(WaveModel {
            medium: cfg.medium.clone(),
            uncertainty: cfg.uncertainty,
            source: cfg.source,
            geometry: cfg.geometry.clone(),
            discretization: cfg.hierarchy.discretization(),
            opts: cfg.solver,
            data: load_data(cfg)?,
            kind: cfg.qoi,
        }),
    })
}

pub fn provenance(cfg: &RunConfig, model: &dyn SampleModel) -> Provenance {
    Provenance { qoi_kind: cfg.qoi.label().into(), model: model.id(), config_digest: cfg.digest() }
}

fn open_pool(cfg: &RunConfig, model: &dyn SampleModel, path: &Path) -> Result<(PoolStore, SamplePool)> {
    PoolStore::open(path, provenance(cfg, model))
}

/// Runs the verification study and writes the calibration and its
/// diagnostic table.
pub fn cmd_verify(cfg: &RunConfig) -> Result<RateModels> {
    let model = build_model(cfg)?;
    let (mut store, mut pool) = open_pool(cfg, model.as_ref(), &cfg.output.join("verify").join("pool.jsonl"))?;
    let rm = run_verification(
        model.as_ref(),
        derive_run(cfg.seed, "verify", 0),
        &cfg.verification.counts,
        &mut pool,
        Some(&mut store),
        cfg.workers,
        cfg.rates,
        cfg.bootstrap(),
    )?;
    write_json(&calibration_path(cfg), &rm)?;
    let mut w = BufWriter::new(File::create(cfg.output.join("verify").join("diagnostics.csv"))?);
    w.write_all(diagnostics_table(&rm).as_bytes())?;
    w.flush()?;
    Ok(rm)
}

/// Per-level means and variances of `Q_l` and `Q_l - Q_{l-1}` with their
/// bootstrap intervals, and the mean work.
pub fn diagnostics_table(rm: &RateModels) -> String {
    let mut s = String::from(
        "level,samples,mean,mean_lo,mean_hi,var,var_lo,var_hi,dmean,dmean_lo,dmean_hi,dvar,dvar_lo,dvar_hi,work_s,fine_work_s\n",
    );
    for d in &rm.diagnostics {
        let c = d.correction.as_ref();
        let opt = |f: &dyn Fn(&seismlmc::calibrate::CorrectionDiagnostics) -> f64| {
            c.map_or(String::new(), |c| format!("{:e}", f(c)))
        };
        s += &format!(
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{},{},{},{},{:e},{:e}\n",
            d.level,
            d.samples,
            d.mean,
            d.mean_ci.0,
            d.mean_ci.1,
            d.variance,
            d.variance_ci.0,
            d.variance_ci.1,
            opt(&|c| c.mean),
            opt(&|c| c.mean_ci.0),
            opt(&|c| c.mean_ci.1),
            opt(&|c| c.variance),
            opt(&|c| c.variance_ci.0),
            opt(&|c| c.variance_ci.1),
            d.work,
            d.base_work,
        );
    }
    s
}

pub fn load_calibration(cfg: &RunConfig) -> Result<RateModels> {
    let rm: RateModels = read_json(&calibration_path(cfg), "calibration (run `verify` first)")?;
    if rm.config_digest != cfg.digest() {
        return Err(Error::Invalid("calibration was produced for a different configuration".into()));
    }
    rm.validate()?;
    Ok(rm)
}

/// MLMC and MC plans at one tolerance; `None` where infeasible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub tol: f64,
    pub mlmc: Option<Plan>,
    pub mc: Option<Plan>,
}

pub fn plan_rows(cfg: &RunConfig, rm: &RateModels, tols: &[f64]) -> Result<Vec<PlanRow>> {
    let keep = |r: Result<Plan>| match r {
        Ok(p) => Ok(Some(p)),
        Err(Error::Infeasible { .. }) => Ok(None),
        Err(e) => Err(e),
    };
    tols.iter()
        .map(|&tol| {
            Ok(PlanRow {
                tol,
                mlmc: keep(select_hierarchy(tol, cfg.study.c_alpha, cfg.hierarchy.l_max, rm))?,
                mc: keep(select_mc(tol, cfg.study.c_alpha, cfg.hierarchy.l_max, rm))?,
            })
        })
        .collect()
}

/// Plans every configured tolerance. Fails with [`Error::Infeasible`]
/// only when no tolerance admits an MLMC plan.
pub fn cmd_plan(cfg: &RunConfig) -> Result<Vec<PlanRow>> {
    let rm = load_calibration(cfg)?;
    let tols = cfg.study.tolerances.values();
    let rows = plan_rows(cfg, &rm, &tols)?;
    if !tols.is_empty() && rows.iter().all(|r| r.mlmc.is_none()) {
        let best_bias = (0..=cfg.hierarchy.l_max).map(|l| rm.model_bias(l)).fold(f64::INFINITY, f64::min);
        return Err(Error::Infeasible { tol: tols[0], best_bias });
    }
    write_json(&cfg.output.join("plans.json"), &rows)?;
    Ok(rows)
}

/// Plan table: one row per tolerance and estimator with `N_l` per level.
pub fn plan_table(rows: &[PlanRow], l_max: u32) -> String {
    let mut s = format!("{:<5} {:>11}", "kind", "TOL");
    for l in 0..=l_max {
        s += &format!(" {:>9}", format!("N_{l}"));
    }
    s += &format!(" {:>7} {:>12}\n", "theta", "work [s]");
    for r in rows {
        for (kind, p) in [(PlanKind::Mlmc, &r.mlmc), (PlanKind::Mc, &r.mc)] {
            let label = if kind == PlanKind::Mlmc { "MLMC" } else { "MC" };
            s += &format!("{label:<5} {:>11.4e}", r.tol);
            match p {
                Some(p) => {
                    for l in 0..=l_max {
                        let n = p.samples_at(l).map_or("--".to_string(), |n| n.to_string());
                        s += &format!(" {n:>9}");
                    }
                    s += &format!(" {:>7.3} {:>12.4e}\n", p.theta, p.predicted_work);
                }
                None => {
                    for _ in 0..=l_max {
                        s += &format!(" {:>9}", "--");
                    }
                    s += &format!(" {:>7} {:>12}\n", "--", "--");
                }
            }
        }
    }
    s
}

/// One executed estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub plan: Plan,
    pub pool: PathBuf,
    pub estimate: f64,
    pub estimator_variance: f64,
    pub measured_work: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceResult {
    pub tol: f64,
    pub mlmc: Option<EstimateRecord>,
    /// Executed MC estimate, if it fit the budget.
    pub mc: Option<EstimateRecord>,
    /// Planned MC estimator, executed or not.
    pub mc_plan: Option<Plan>,
    /// `|A - reference|` for bootstrap replicates of the MLMC estimate
    /// drawn from the pooled samples.
    pub bootstrap_errors: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub value: f64,
    pub variance: f64,
    /// Pooled samples per level, level 0 first.
    pub samples: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub qoi: String,
    pub c_alpha: f64,
    pub config_digest: String,
    pub tolerances: Vec<ToleranceResult>,
    pub reference: Reference,
}

fn execute(
    cfg: &RunConfig,
    model: &dyn SampleModel,
    plan: &Plan,
    run: u64,
    path: &Path,
) -> Result<(EstimateRecord, SamplePool)> {
    let (mut store, mut pool) = open_pool(cfg, model, path)?;
    for (l, &n) in plan.levels().zip(&plan.samples) {
        let kind = if l == plan.l0 { SampleKind::Fine } else { SampleKind::Coupled };
        run_samples(model, run, l, kind, n, &mut pool, Some(&mut store), cfg.workers)?;
    }
    let rec = EstimateRecord {
        plan: plan.clone(),
        pool: path.file_name().map(PathBuf::from).unwrap_or_default(),
        estimate: mlmc_estimate(&pool, plan)?,
        estimator_variance: mlmc_estimator_variance(&pool, plan)?,
        measured_work: plan_work(&pool, plan)?,
    };
    Ok((rec, pool))
}

/// Fine values and corrections per level over every sample of every
/// pool.
#[derive(Default)]
struct Pooled {
    fine: Vec<Vec<f64>>,
    corrections: Vec<Vec<f64>>,
}

impl Pooled {
    fn add(&mut self, pool: &SamplePool) {
        for l in pool.levels() {
            let l_us = l as usize;
            if self.fine.len() <= l_us {
                self.fine.resize(l_us + 1, Vec::new());
                self.corrections.resize(l_us + 1, Vec::new());
            }
            self.fine[l_us].extend(pool.all_fine(l));
            if l > 0 {
                self.corrections[l_us].extend(pool.all_corrections(l));
            }
        }
    }

    /// Level 0 fine values plus corrections, up to the highest level with
    /// at least two corrections.
    fn reference(&self) -> Reference {
        let Some(zero) = self.fine.first().filter(|v| v.len() >= 2) else { return Reference::default() };
        let top = self.corrections.iter().rposition(|v| v.len() >= 2).unwrap_or(0);
        let mut value = 0.0;
        let mut variance = 0.0;
        let mut samples = Vec::new();
        for l in 0..=top {
            let v = if l == 0 { zero } else { &self.corrections[l] };
            samples.push(v.len());
            if v.len() < 2 {
                continue;
            }
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            value += m;
            variance += v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n;
        }
        Reference { value, variance, samples }
    }

    /// One bootstrap replicate of an estimator following `plan`.
    fn replicate(&self, plan: &Plan, rng: &mut ChaCha8Rng) -> Option<f64> {
        let mut a = 0.0;
        for (l, &n) in plan.levels().zip(&plan.samples) {
            let v = if l == plan.l0 { &self.fine } else { &self.corrections }.get(l as usize)?;
            if v.is_empty() {
                return None;
            }
            a += (0..n).map(|_| v[rng.random_range(0..v.len())]).sum::<f64>() / n as f64;
        }
        Some(a)
    }
}

/// Executes the MLMC and (within budget) MC plans at every tolerance with
/// independent seeds, pools all samples into a reference value and
/// bootstraps the error of each MLMC estimate.
pub fn cmd_run(cfg: &RunConfig) -> Result<StudyReport> {
    let rm = load_calibration(cfg)?;
    let model = build_model(cfg)?;
    let tols = cfg.study.tolerances.values();
    let rows = plan_rows(cfg, &rm, &tols)?;
    let dir = cfg.output.join("run");
    let mut pooled = Pooled::default();
    let (_, verify) = open_pool(cfg, model.as_ref(), &cfg.output.join("verify").join("pool.jsonl"))?;
    pooled.add(&verify);
    let mut results = Vec::new();
    for (k, row) in rows.iter().enumerate() {
        let mut res = ToleranceResult {
            tol: row.tol,
            mlmc: None,
            mc: None,
            mc_plan: row.mc.clone(),
            bootstrap_errors: Vec::new(),
        };
        match &row.mlmc {
            Some(p) => {
                let (rec, pool) =
                    execute(cfg, model.as_ref(), p, derive_run(cfg.seed, "mlmc", k as u64), &dir.join(format!("mlmc-{k}.jsonl")))?;
                pooled.add(&pool);
                res.mlmc = Some(rec);
            }
            None => eprintln!("warning: no MLMC hierarchy meets TOL = {:.4e}; skipped", row.tol),
        }
        match &row.mc {
            Some(p) if p.predicted_work <= cfg.study.mc_budget => {
                let (rec, pool) =
                    execute(cfg, model.as_ref(), p, derive_run(cfg.seed, "mc", k as u64), &dir.join(format!("mc-{k}.jsonl")))?;
                pooled.add(&pool);
                res.mc = Some(rec);
            }
            Some(p) => eprintln!(
                "warning: MC at TOL = {:.4e} predicted at {:.3e} s exceeds the budget; not run",
                row.tol, p.predicted_work
            ),
            None => eprintln!("warning: no MC level meets TOL = {:.4e}; skipped", row.tol),
        }
        results.push(res);
    }
    let reference = pooled.reference();
    for (k, res) in results.iter_mut().enumerate() {
        let Some(m) = &res.mlmc else { continue };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_run(cfg.seed, "replicate", k as u64));
        res.bootstrap_errors = (0..cfg.study.bootstrap_replicates)
            .filter_map(|_| pooled.replicate(&m.plan, &mut rng))
            .map(|a| (a - reference.value).abs())
            .collect();
    }
    let report = StudyReport {
        qoi: cfg.qoi.label().into(),
        c_alpha: cfg.study.c_alpha,
        config_digest: cfg.digest(),
        tolerances: results,
        reference,
    };
    write_json(&study_path(cfg), &report)?;
    Ok(report)
}

/// Loads the study written by `run`, or an empty one.
pub fn load_study(cfg: &RunConfig) -> Result<StudyReport> {
    let p = study_path(cfg);
    if !p.exists() {
        return Ok(StudyReport { qoi: cfg.qoi.label().into(), c_alpha: cfg.study.c_alpha, ..Default::default() });
    }
    let s: StudyReport = read_json(&p, "study")?;
    if s.config_digest != cfg.digest() {
        return Err(Error::Invalid("study was produced for a different configuration".into()));
    }
    Ok(s)
}

/// Share of replicates whose error stays below the tolerance.
pub fn success_rate(r: &ToleranceResult) -> Option<f64> {
    (!r.bootstrap_errors.is_empty())
        .then(|| r.bootstrap_errors.iter().filter(|e| **e <= r.tol).count() as f64 / r.bootstrap_errors.len() as f64)
}

/// `1 - W_MLMC / W_MC` with MC work measured where it was run and
/// predicted otherwise.
pub fn savings(r: &ToleranceResult) -> Option<f64> {
    let mlmc = r.mlmc.as_ref()?.measured_work;
    let mc = r.mc.as_ref().map(|m| m.measured_work).or(r.mc_plan.as_ref().map(|p| p.predicted_work))?;
    Some(1.0 - mlmc / mc)
}

/// Median of the bootstrap errors.
pub fn median_error(r: &ToleranceResult) -> Option<f64> {
    let mut e = r.bootstrap_errors.clone();
    if e.is_empty() {
        return None;
    }
    e.sort_by(f64::total_cmp);
    Some(quantile_sorted(&e, 0.5))
}

/// Q_E and Q_W of one material with attenuation on and off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttenuationRow {
    pub level: u32,
    pub qoi: String,
    pub with: f64,
    pub without: f64,
}

impl AttenuationRow {
    /// Relative change caused by attenuation, percent.
    pub fn change_percent(&self) -> f64 {
        100.0 * (self.with - self.without) / self.without
    }
}

pub fn cmd_attenuation_compare(cfg: &RunConfig) -> Result<Vec<AttenuationRow>> {
    let data = load_data(cfg)?;
    let d = cfg.hierarchy.discretization();
    let mut rows = Vec::new();
    for &l in &cfg.attenuation_compare.levels {
        let solve = |attenuation: bool| {
            let opts = seismlmc::solver::SimOptions { attenuation, ..cfg.solver };
            simulate(&cfg.attenuation_compare.material, &cfg.medium, &cfg.source, &cfg.geometry, &d.level(l), &opts)
        };
        let (on, off) = (solve(true)?, solve(false)?);
        for kind in [QoiKind::L2, QoiKind::Wasserstein] {
            rows.push(AttenuationRow {
                level: l,
                qoi: kind.label().into(),
                with: kind.evaluate(&on, &data)?,
                without: kind.evaluate(&off, &data)?,
            });
        }
    }
    let mut s = String::from("level,qoi,with_attenuation,without_attenuation,change_percent\n");
    for r in &rows {
        s += &format!("{},{},{:e},{:e},{:.3}\n", r.level, r.qoi, r.with, r.without, r.change_percent());
    }
    std::fs::create_dir_all(&cfg.output)?;
    std::fs::write(cfg.output.join("attenuation.csv"), s)?;
    Ok(rows)
}

/// Exit status for an error: 2 configuration, 3 infeasible tolerance,
/// 4 forward-model failure, 1 anything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Invalid(_) | Error::Parse(_) | Error::GridMismatch(_) => 2,
        Error::Infeasible { .. } => 3,
        Error::Unstable { .. } | Error::BlowUp { .. } | Error::SlsFit { .. } | Error::Sample { .. } => 4,
        _ => 1,
    }
}
