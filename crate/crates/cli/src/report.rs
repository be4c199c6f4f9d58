//! CSV tables and SVG plots rendered from a stored study.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use seismlmc::{Error, Result};

use crate::commands::{median_error, plan_table, savings, success_rate, PlanRow, StudyReport};

/// Savings quoted for the full-size study, drawn for comparison.
pub const REFERENCE_SAVINGS: [(&str, f64); 2] = [("Q_E", 0.97), ("Q_W", 0.78)];

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v:e}"))
}

pub fn summary_csv(s: &StudyReport) -> String {
    let mut out = String::from(
        "tol,mlmc_estimate,mlmc_variance,mlmc_work_s,mlmc_predicted_s,mlmc_l0,mlmc_top,theta,mc_estimate,mc_variance,mc_work_s,mc_predicted_s,mc_level,savings,median_error,success_rate\n",
    );
    for r in &s.tolerances {
        let m = r.mlmc.as_ref();
        let mc = r.mc.as_ref();
        let _ = writeln!(
            out,
            "{:e},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.tol,
            opt(m.map(|m| m.estimate)),
            opt(m.map(|m| m.estimator_variance)),
            opt(m.map(|m| m.measured_work)),
            opt(m.map(|m| m.plan.predicted_work)),
            m.map_or(String::new(), |m| m.plan.l0.to_string()),
            m.map_or(String::new(), |m| m.plan.l_top.to_string()),
            opt(m.map(|m| m.plan.theta)),
            opt(mc.map(|m| m.estimate)),
            opt(mc.map(|m| m.estimator_variance)),
            opt(mc.map(|m| m.measured_work)),
            opt(r.mc_plan.as_ref().map(|p| p.predicted_work)),
            r.mc_plan.as_ref().map_or(String::new(), |p| p.l_top.to_string()),
            opt(savings(r)),
            opt(median_error(r)),
            opt(success_rate(r)),
        );
    }
    out
}

pub fn reference_csv(s: &StudyReport) -> String {
    let mut out = String::from("value,variance,samples_per_level\n");
    let n: Vec<String> = s.reference.samples.iter().map(usize::to_string).collect();
    let _ = writeln!(out, "{:e},{:e},{}", s.reference.value, s.reference.variance, n.join(";"));
    out
}

pub fn bootstrap_csv(s: &StudyReport) -> String {
    let mut out = String::from("tol,replicate,error\n");
    for r in &s.tolerances {
        for (i, e) in r.bootstrap_errors.iter().enumerate() {
            let _ = writeln!(out, "{:e},{i},{e:e}", r.tol);
        }
    }
    out
}

/// Statistical error `sqrt(V)` against the share `theta TOL / C_alpha`
/// it was planned for.
pub fn stat_error_csv(s: &StudyReport) -> String {
    let mut out = String::from("tol,theta_tol_over_c_alpha,statistical_error\n");
    for r in &s.tolerances {
        if let Some(m) = &r.mlmc {
            let _ = writeln!(
                out,
                "{:e},{:e},{:e}",
                r.tol,
                m.plan.theta * r.tol / s.c_alpha,
                m.estimator_variance.sqrt()
            );
        }
    }
    out
}

pub fn savings_csv(s: &StudyReport) -> String {
    let mut out = String::from("tol,savings,reference\n");
    let reference = REFERENCE_SAVINGS.iter().find(|(q, _)| *q == s.qoi).map(|r| r.1);
    for r in &s.tolerances {
        let _ = writeln!(out, "{:e},{},{}", r.tol, opt(savings(r)), opt(reference));
    }
    out
}

type Series = (String, Vec<(f64, f64)>, bool);

fn log_range(points: impl Iterator<Item = f64>) -> std::ops::Range<f64> {
    let (lo, hi) = points
        .filter(|v| *v > 0.0 && v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        return 0.1..1.0;
    }
    lo / 2.0..hi * 2.0
}

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::Invalid(format!("plotting failed: {e}"))
}

const COLORS: [RGBColor; 4] = [BLUE, RED, BLACK, GREEN];

/// Log-log chart; series flagged `true` are drawn as markers, the rest
/// as lines.
fn loglog(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<()> {
    let xr = log_range(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let yr = log_range(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let root = SVGBackend::new(path, (640, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(xr.log_scale(), yr.log_scale())
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .x_label_formatter(&|v| format!("{v:.1e}"))
        .y_label_formatter(&|v| format!("{v:.1e}"))
        .draw()
        .map_err(plot_err)?;
    for (i, (name, pts, markers)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<_> = pts.iter().copied().filter(|p| p.0 > 0.0 && p.1 > 0.0).collect();
        let anno = if *markers {
            chart.draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled()))).map_err(plot_err)?
        } else {
            chart.draw_series(LineSeries::new(pts, color)).map_err(plot_err)?
        };
        anno.label(name.as_str()).legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

/// Reference line `c x^slope` through the first point of `anchor`.
fn slope_line(name: &str, slope: f64, anchor: &[(f64, f64)], xs: &[f64]) -> Option<Series> {
    let &(x0, y0) = anchor.first()?;
    Some((name.to_string(), xs.iter().map(|&x| (x, y0 * (x / x0).powf(slope))).collect(), false))
}

fn work_series(s: &StudyReport) -> Vec<Series> {
    let xs: Vec<f64> = s.tolerances.iter().map(|r| r.tol).collect();
    let pick = |f: &dyn Fn(&crate::commands::ToleranceResult) -> Option<f64>| -> Vec<(f64, f64)> {
        s.tolerances.iter().filter_map(|r| f(r).map(|w| (r.tol, w))).collect()
    };
    let mlmc = pick(&|r| r.mlmc.as_ref().map(|m| m.measured_work));
    let mlmc_pred = pick(&|r| r.mlmc.as_ref().map(|m| m.plan.predicted_work));
    let mc = pick(&|r| r.mc.as_ref().map(|m| m.measured_work));
    let mc_pred = pick(&|r| r.mc_plan.as_ref().map(|p| p.predicted_work));
    let mut out = vec![
        ("MLMC measured".to_string(), mlmc, true),
        ("MLMC predicted".to_string(), mlmc_pred.clone(), false),
        ("MC measured".to_string(), mc, true),
        ("MC predicted".to_string(), mc_pred.clone(), false),
    ];
    out.extend(slope_line("TOL^-2", -2.0, &mlmc_pred, &xs));
    out.extend(slope_line("TOL^-3.5", -3.5, &mc_pred, &xs));
    out
}

fn error_series(s: &StudyReport) -> Vec<Series> {
    let scatter: Vec<(f64, f64)> =
        s.tolerances.iter().flat_map(|r| r.bootstrap_errors.iter().map(move |&e| (r.tol, e))).collect();
    let tol: Vec<(f64, f64)> = s.tolerances.iter().map(|r| (r.tol, r.tol)).collect();
    vec![("bootstrap errors".to_string(), scatter, true), ("TOL".to_string(), tol, false)]
}

fn stat_series(s: &StudyReport) -> Vec<Series> {
    let pts: Vec<(f64, f64)> = s
        .tolerances
        .iter()
        .filter_map(|r| r.mlmc.as_ref().map(|m| (m.plan.theta * r.tol / s.c_alpha, m.estimator_variance.sqrt())))
        .collect();
    let diag: Vec<(f64, f64)> = pts.iter().map(|p| (p.0, p.0)).collect();
    vec![("sqrt(V)".to_string(), pts, true), ("target".to_string(), diag, false)]
}

/// Writes every table and, with `svg`, every plot under `dir`. Returns the
/// files written, in a fixed order.
pub fn write_report(dir: &Path, study: &StudyReport, plans: &[PlanRow], l_max: u32, svg: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let tables = [
        ("summary.csv", summary_csv(study)),
        ("reference.csv", reference_csv(study)),
        ("bootstrap_errors.csv", bootstrap_csv(study)),
        ("statistical_error.csv", stat_error_csv(study)),
        ("savings.csv", savings_csv(study)),
        ("plans.txt", plan_table(plans, l_max)),
    ];
    for (name, text) in tables {
        let p = dir.join(name);
        std::fs::write(&p, text)?;
        files.push(p);
    }
    if svg {
        let plots: [(&str, &str, &str, &str, Vec<Series>); 3] = [
            ("work.svg", "Work", "TOL", "work [s]", work_series(study)),
            ("error.svg", "Error", "TOL", "|A - reference|", error_series(study)),
            ("statistical_error.svg", "Statistical error", "theta TOL / C_alpha", "sqrt(V)", stat_series(study)),
        ];
        for (name, title, x, y, series) in plots {
            let p = dir.join(name);
            loglog(&p, title, x, y, &series)?;
            files.push(p);
        }
    }
    Ok(files)
}

/// Renders the stored study and plans of `cfg` into `output/report`.
pub fn cmd_report(cfg: &crate::config::RunConfig, svg: bool) -> Result<Vec<PathBuf>> {
    let study = crate::commands::load_study(cfg)?;
    let plans_path = cfg.output.join("plans.json");
    let plans: Vec<PlanRow> = if plans_path.exists() {
        serde_json::from_str(&std::fs::read_to_string(&plans_path)?)?
    } else {
        Vec::new()
    };
    write_report(&cfg.output.join("report"), &study, &plans, cfg.hierarchy.l_max, svg)
}
