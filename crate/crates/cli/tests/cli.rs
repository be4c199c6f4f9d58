use std::path::{Path, PathBuf};
use std::process::Command;

use seismlmc::qoi::QoiKind;
use seismlmc_cli::commands::{self, cmd_plan, cmd_run, cmd_verify, exit_code, load_study};
use seismlmc_cli::config::{ModelKind, Tolerances, WORKERS_ENV};
use seismlmc_cli::report::cmd_report;
use seismlmc_cli::RunConfig;
use tempfile::TempDir;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn write(dir: &Path, cfg: &RunConfig) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, cfg.to_toml()).unwrap();
    p
}

fn surrogate(dir: &Path) -> RunConfig {
    let mut c = RunConfig::surrogate();
    c.output = dir.join("out");
    c.study.tolerances = Tolerances::Schedule { first: 0.1, count: 3 };
    c
}

/// Desk problem cut down to two levels.
fn small_solver(dir: &Path) -> RunConfig {
    let mut c = RunConfig::desk(QoiKind::L2);
    c.output = dir.join("out");
    c.hierarchy.l_max = 1;
    c.data.level = 2;
    c.verification.counts = vec![4, 2];
    c.attenuation_compare.levels = vec![0];
    c
}

fn bin(config: &Path, sub: &str) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_mlmc-seis"))
        .arg(config)
        .arg(sub)
        .env_remove(WORKERS_ENV)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn shipped_configs_match_presets() {
    let cases = [
        ("desk-e", RunConfig::desk(QoiKind::L2)),
        ("desk-w", RunConfig::desk(QoiKind::Wasserstein)),
        ("paper-e", RunConfig::paper(QoiKind::L2)),
        ("paper-w", RunConfig::paper(QoiKind::Wasserstein)),
        ("surrogate", RunConfig::surrogate()),
    ];
    for (name, mut preset) in cases {
        let path = repo().join("configs").join(format!("{name}.toml"));
        let mut loaded = RunConfig::load(&path).unwrap();
        loaded.workers = 1;
        preset.output = path.parent().unwrap().join(&preset.output);
        assert_eq!(loaded, preset, "{name}");
    }
}

#[test]
fn digest_ignores_study_and_output() {
    let a = RunConfig::surrogate();
    let mut b = a.clone();
    b.output = "elsewhere".into();
    b.workers = 4;
    b.study.c_alpha = 3.0;
    b.verification.counts = vec![1, 1];
    assert_eq!(a.digest(), b.digest());
    b.seed += 1;
    assert_ne!(a.digest(), b.digest());
}

#[test]
fn invalid_configs_are_rejected() {
    let dir = TempDir::new().unwrap();
    let mut c = small_solver(dir.path());
    c.hierarchy.dt0 = 0.03;
    assert!(c.validate().is_err(), "dt0 not commensurate with 25 Hz");
    let mut c = small_solver(dir.path());
    c.geometry.pad_x = 1000.0;
    assert!(c.validate().is_err(), "pads too small");
    let mut c = small_solver(dir.path());
    c.data.level = 1;
    assert!(c.validate().is_err(), "data not finer than the hierarchy");
    assert!(small_solver(dir.path()).validate().is_ok());
}

#[test]
fn surrogate_study_end_to_end() {
    let dir = TempDir::new().unwrap();
    let cfg = surrogate(dir.path());
    let rm = cmd_verify(&cfg).unwrap();
    assert_eq!(rm.diagnostics.len(), 4);
    // correction variance decreases and work grows by 2^gamma
    for w in rm.diagnostics[1..].windows(2) {
        let (a, b) = (w[0].correction.as_ref().unwrap(), w[1].correction.as_ref().unwrap());
        assert!(b.variance < a.variance);
        assert!((w[1].base_work / w[0].base_work - 8.0).abs() < 1e-9);
    }
    let rows = cmd_plan(&cfg).unwrap();
    assert_eq!(rows.len(), 3);
    let s = cmd_run(&cfg).unwrap();
    let exact = cfg.surrogate.exact_mean();
    for r in &s.tolerances {
        let m = r.mlmc.as_ref().unwrap();
        assert!((m.measured_work - m.plan.predicted_work).abs() <= 1e-9 * m.plan.predicted_work);
        assert!((m.estimate - exact).abs() < 2.0 * r.tol);
        assert_eq!(r.bootstrap_errors.len(), 100);
        let sv = commands::savings(r).unwrap();
        let mc = r.mc.as_ref().unwrap().measured_work;
        assert_eq!(sv, 1.0 - m.measured_work / mc);
    }
    assert!((s.reference.value - exact).abs() < 5.0 * s.reference.variance.sqrt());
    assert_eq!(load_study(&cfg).unwrap(), s);
}

#[test]
fn rerun_reuses_every_sample() {
    let dir = TempDir::new().unwrap();
    let cfg = surrogate(dir.path());
    cmd_verify(&cfg).unwrap();
    let first = cmd_run(&cfg).unwrap();
    let pool = cfg.output.join("run").join("mlmc-2.jsonl");
    let full = std::fs::read_to_string(&pool).unwrap();
    let lines = full.lines().count();

    // a rerun appends nothing
    let again = cmd_run(&cfg).unwrap();
    assert_eq!(again, first);
    assert_eq!(std::fs::read_to_string(&pool).unwrap(), full);

    // an interrupted run leaves a prefix and maybe a torn line; the
    // restart computes only what is missing
    let keep = lines / 2;
    let mut cut: String = full.lines().take(keep).map(|l| format!("{l}\n")).collect();
    cut.push_str(&full.lines().nth(keep).unwrap()[..10]);
    std::fs::write(&pool, &cut).unwrap();
    let resumed = cmd_run(&cfg).unwrap();
    assert_eq!(resumed, first);
    let after = std::fs::read_to_string(&pool).unwrap();
    assert!(after.starts_with(&cut));
    assert_eq!(after.lines().count(), lines + 1, "one torn line plus the missing samples");
}

#[test]
fn report_is_byte_identical_and_empty_report_is_valid() {
    let dir = TempDir::new().unwrap();
    let cfg = surrogate(dir.path());

    let files = cmd_report(&cfg, true).unwrap();
    let summary = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(summary.lines().count(), 1, "header only");
    for f in files.iter().filter(|f| f.extension().unwrap() == "svg") {
        assert!(std::fs::read_to_string(f).unwrap().trim_end().ends_with("</svg>"));
    }

    cmd_verify(&cfg).unwrap();
    cmd_plan(&cfg).unwrap();
    cmd_run(&cfg).unwrap();
    let read = |fs: &[PathBuf]| fs.iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>();
    let a = read(&cmd_report(&cfg, true).unwrap());
    let b = read(&cmd_report(&cfg, true).unwrap());
    assert_eq!(a, b);
    let savings = std::fs::read_to_string(cfg.output.join("report").join("savings.csv")).unwrap();
    assert_eq!(savings.lines().count(), 4);
}

#[test]
fn stale_calibration_is_rejected() {
    let dir = TempDir::new().unwrap();
    let mut cfg = surrogate(dir.path());
    cmd_verify(&cfg).unwrap();
    cfg.surrogate.c_b = 2.0;
    let e = cmd_plan(&cfg).unwrap_err();
    assert_eq!(exit_code(&e), 2);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "model = \"solver\"\n").unwrap();
    assert_eq!(bin(&bad, "plan"), 2);
    assert_eq!(bin(&dir.path().join("missing.toml"), "plan"), 2);

    // solver verification without data
    let p = write(dir.path(), &small_solver(dir.path()));
    assert_eq!(bin(&p, "verify"), 2);

    let mut c = surrogate(dir.path());
    let p = write(dir.path(), &c);
    assert_eq!(bin(&p, "verify"), 0);
    assert_eq!(bin(&p, "plan"), 0);
    c.study.tolerances = Tolerances::List(vec![1e-12]);
    let p = write(dir.path(), &c);
    assert_eq!(bin(&p, "plan"), 3);

    // three SLS mechanisms cannot be replaced by one
    let mut c = small_solver(dir.path());
    c.solver.mechanisms = 1;
    let p = write(dir.path(), &c);
    assert_eq!(bin(&p, "synth"), 4);
}

#[test]
fn synthetic_data_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_solver(dir.path());
    cfg.data.noise = seismlmc::data::Noise::Absolute(0.0);
    let a = commands::cmd_synth(&cfg).unwrap();
    let bytes = std::fs::read(cfg.output.join("data").join("data.csv")).unwrap();
    commands::cmd_synth(&cfg).unwrap();
    assert_eq!(std::fs::read(cfg.output.join("data").join("data.csv")).unwrap(), bytes);
    assert_eq!(a.sigma, 0.0);

    // noiseless data are the restricted fine solution
    let sim = seismlmc::solver::simulate(
        &cfg.data.material,
        &cfg.medium,
        &cfg.data_source(),
        &cfg.data_geometry(),
        &cfg.hierarchy.discretization().level(cfg.data.level),
        &cfg.solver,
    )
    .unwrap();
    let r = seismlmc::data::restrict(&sim, cfg.data.rate, cfg.source.horizon).unwrap();
    assert_eq!(a.traces, r);
    assert_eq!(a.traces[0].len(), (cfg.data.rate * cfg.source.horizon).round() as usize + 1);

    // verification on the solver
    let rm = cmd_verify(&cfg).unwrap();
    assert_eq!(rm.diagnostics.len(), 2);
    assert!(rm.diagnostics.iter().all(|d| d.mean > 0.0));
}

#[test]
fn attenuation_comparison() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_solver(dir.path());
    commands::cmd_synth(&cfg).unwrap();
    let rows = commands::cmd_attenuation_compare(&cfg).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.change_percent().abs() > 0.0));

    let layers = cfg.medium.layers().iter().map(|l| seismlmc::medium::LayerSpec { q_factor: f64::INFINITY, ..l.clone() }).collect();
    cfg.medium = seismlmc::medium::LayeredMedium::new(layers).unwrap();
    let rows = commands::cmd_attenuation_compare(&cfg).unwrap();
    assert!(rows.iter().all(|r| r.change_percent() == 0.0), "{rows:?}");
    assert!(cfg.output.join("attenuation.csv").exists());
}

#[test]
fn workers_env_overrides() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), &surrogate(dir.path()));
    std::env::set_var(WORKERS_ENV, "3");
    let c = RunConfig::load(&p);
    std::env::remove_var(WORKERS_ENV);
    assert_eq!(c.unwrap().workers, 3);
    assert_eq!(RunConfig::surrogate().model, ModelKind::Surrogate);
}
