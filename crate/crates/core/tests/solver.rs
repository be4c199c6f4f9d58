use seismlmc::medium::{LayerSpec, LayeredMedium, MaterialSample, UncertaintySpec};
use seismlmc::presets::{data_sample, desk_discretization, desk_geometry, desk_medium, desk_source, paper_medium, paper_uncertainty};
use seismlmc::solver::{
    grid_shape, measure_work, required_padding, simulate, Geometry, Level, Seismogram, SimOptions,
    Simulation, SourceSpec,
};
use seismlmc::Error;

const VP: f64 = 6000.0;
const VS: f64 = 3464.0;

fn homogeneous() -> (LayeredMedium, MaterialSample) {
    let m = LayeredMedium::new(vec![LayerSpec {
        thickness: None,
        rho_bar: 2500.0,
        vs_bar: VS,
        vp_bar: VP,
        q_factor: 300.0,
    }])
    .unwrap();
    let s = MaterialSample { rho: vec![2500.0], vs: vec![VS], vp: vec![VP] };
    (m, s)
}

fn explosion(depth: f64, f0: f64, t0: f64, horizon: f64) -> SourceSpec {
    SourceSpec { x_s: 0.0, depth, moment: [[1e15, 0.0], [0.0, 1e15]], f0, t_c: 0.0, t0, horizon }
}

fn peak(s: &[Seismogram]) -> f64 {
    s.iter().map(Seismogram::max_abs).fold(0.0, f64::max)
}

#[test]
fn zero_moment_gives_zero_traces() {
    let mut src = desk_source();
    src.moment = [[0.0; 2]; 2];
    let out = simulate(&data_sample(), &desk_medium(), &src, &desk_geometry(), &desk_discretization().level(0), &SimOptions::default())
        .unwrap();
    assert!(out.iter().all(|s| s.ux.iter().chain(&s.uz).all(|v| *v == 0.0)));
}

#[test]
fn simulation_is_deterministic() {
    let run = || {
        simulate(&data_sample(), &desk_medium(), &desk_source(), &desk_geometry(), &desk_discretization().level(1), &SimOptions::default())
            .unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn refinement_quadruples_cells_and_doubles_steps() {
    let d = desk_discretization();
    for l in 0..4 {
        let a = grid_shape(&desk_source(), &desk_geometry(), &d.level(l)).unwrap();
        let b = grid_shape(&desk_source(), &desk_geometry(), &d.level(l + 1)).unwrap();
        assert_eq!(b.cells(), 4 * a.cells());
        assert_eq!(b.steps, 2 * a.steps);
    }
}

#[test]
fn attenuation_lowers_peaks() {
    let lv = desk_discretization().level(1);
    let go = |opts: SimOptions| simulate(&data_sample(), &desk_medium(), &desk_source(), &desk_geometry(), &lv, &opts).unwrap();
    let on = go(SimOptions::default());
    let off = go(SimOptions::default().elastic());
    for (a, b) in on.iter().zip(&off) {
        assert!(a.max_abs() < b.max_abs(), "receiver {}: {} vs {}", a.receiver, a.max_abs(), b.max_abs());
    }
}

#[test]
fn unstable_steps_are_rejected() {
    let (m, s) = homogeneous();
    let src = explosion(5000.0, 1.0, -1.2, 2.0);
    let geom = Geometry { offsets: vec![1000.0], receiver_depth: 0.0, pad_x: 20_000.0, pad_z: 20_000.0 };
    let lv = Level::new(0, 1000.0, 0.2);
    let r = simulate(&s, &m, &src, &geom, &lv, &SimOptions::default().elastic());
    assert!(matches!(r, Err(Error::Unstable { .. })), "{r:?}");
}

#[test]
fn energy_does_not_grow_after_the_source() {
    let (m, s) = homogeneous();
    let src = explosion(5000.0, 2.0, -0.6, 6.0);
    let geom = Geometry { offsets: vec![2000.0], receiver_depth: 0.0, pad_x: 10_000.0, pad_z: 10_000.0 };
    let lv = Level::new(1, 500.0, 0.02);
    let opts = SimOptions { sponge_cells: 10, ..SimOptions::default().elastic() };
    let mut sim = Simulation::new(&s, &m, &src, &geom, &lv, &opts).unwrap();
    let mut prev = f64::INFINITY;
    let mut worst: f64 = 0.0;
    while sim.current_step() < sim.steps() {
        sim.advance().unwrap();
        if sim.time() > 0.6 {
            let e = sim.energy();
            worst = worst.max((e - prev) / prev);
            prev = e;
        }
    }
    println!("worst relative energy increase {worst:.3e}");
    assert!(worst <= 1e-3, "{worst}");
}

/// Largest trace difference between a run with `pad` and a run with a pad
/// far enough that nothing returns, relative to the direct peak.
#[test]
fn sponge_reflection_is_small() {
    let (m, s) = homogeneous();
    let src = explosion(30_000.0, 1.0, -1.2, 8.0);
    let lv = Level::new(2, 1000.0, 0.04);
    let opts = SimOptions::default().elastic();
    let geom = |pad: f64| Geometry { offsets: vec![3000.0], receiver_depth: 30_000.0, pad_x: pad, pad_z: 60_000.0 };
    let near = simulate(&s, &m, &src, &geom(22_000.0), &lv, &opts).unwrap();
    let far = simulate(&s, &m, &src, &geom(60_000.0), &lv, &opts).unwrap();
    let direct = peak(&far);
    let diff = near[0]
        .ux
        .iter()
        .zip(&far[0].ux)
        .chain(near[0].uz.iter().zip(&far[0].uz))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("relative reflection {:.3e}", diff / direct);
    assert!(diff / direct < 0.01);
}

/// `d/dt` of the 2-D Green's function `H(t - tau) / sqrt(t^2 - tau^2)`
/// convolved with the source pulse, by the substitution
/// `s = tau cosh w`.
fn far_field_pulse(t: f64, tau: f64, f0: f64) -> f64 {
    let ds = |t: f64| {
        let a = t;
        -9.0 * f0 * f0 * a * 3.0 * f0 / (2.0 * std::f64::consts::PI).sqrt() * (-4.5 * f0 * f0 * a * a).exp()
    };
    let w_max = ((t + 3.0 / f0) / tau).max(1.0).acosh();
    let n = 20_000;
    let dw = w_max / n as f64;
    (0..=n)
        .map(|k| {
            let w = k as f64 * dw;
            let f = ds(t - tau * w.cosh());
            if k == 0 || k == n { 0.5 * f } else { f }
        })
        .sum::<f64>()
        * dw
}

fn first_crossing(t: &[f64], v: &[f64], frac: f64) -> f64 {
    let top = v.iter().copied().fold(0.0, f64::max);
    let k = v.iter().position(|x| *x >= frac * top).unwrap();
    // linear interpolation between the bracketing samples
    let (a, b) = (v[k - 1], v[k]);
    t[k - 1] + (frac * top - a) / (b - a) * (t[k] - t[k - 1])
}

#[test]
fn direct_p_arrival_matches_ray_theory() {
    let (m, s) = homogeneous();
    let f0 = 4.0;
    let src = explosion(10_000.0, f0, -0.3, 3.5);
    let geom = Geometry { offsets: vec![10_000.0], receiver_depth: 0.0, pad_x: 8_000.0, pad_z: 8_000.0 };
    let lv = Level::new(2, 200.0, 0.01);
    let opts = SimOptions { sponge_cells: 30, ..SimOptions::default().elastic() };
    let out = simulate(&s, &m, &src, &geom, &lv, &opts).unwrap();
    let tau = 2f64.sqrt() * 1e4 / VP;
    let times = out[0].times();
    // P window only: the direct S arrives after tau * VP / VS
    let cut = times.iter().position(|&t| t > 0.5 * (tau + tau * VP / VS)).unwrap();
    let amp: Vec<f64> = out[0].ux[..cut].iter().zip(&out[0].uz[..cut]).map(|(a, b)| a.hypot(*b)).collect();
    let pick = first_crossing(&times[..cut], &amp, 0.3);
    let fine: Vec<f64> = (0..3000).map(|k| -0.3 + k as f64 * 1e-3).collect();
    let model: Vec<f64> = fine.iter().map(|&t| far_field_pulse(t, tau, f0).abs()).collect();
    let lead = first_crossing(&fine, &model, 0.3) - tau;
    let travel = pick - lead;
    println!("travel {travel:.4} s, ray theory {tau:.4} s");
    assert!((travel / tau - 1.0).abs() < 0.02);
}

#[test]
fn padding_rules() {
    let m = paper_medium();
    let u = paper_uncertainty();
    let margin = required_padding(&u, &m, 0.0, 2.0);
    assert!((margin - u.vp_upper_bound(&m) / 2.0).abs() < 1e-9);
    let vmax = m.layers().iter().map(|l| 1.1 * l.vs_bar * 1.78).fold(0.0, f64::max);
    assert!(required_padding(&u, &m, 25.0, 2.0) >= 0.5 * 25.0 * vmax);
    let d = required_padding(&u, &m, 50.0, 2.0) - required_padding(&u, &m, 25.0, 2.0);
    assert!((d - u.vp_upper_bound(&m) * 12.5).abs() < 1e-6);
    let degenerate = UncertaintySpec { q: 0.0, r: 0.0, nu_lb: 1.5, nu_ub: 1.5 };
    assert!(required_padding(&degenerate, &m, 1.0, 1.0) > 0.0);
}

#[test]
fn repeated_solves_cost_about_the_same() {
    let lv = desk_discretization().level(2);
    let cost = || {
        measure_work(|| simulate(&data_sample(), &desk_medium(), &desk_source(), &desk_geometry(), &lv, &SimOptions::default()).unwrap()).1
    };
    let mut a = [cost(), cost(), cost()];
    let mut b = [cost(), cost(), cost()];
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    assert!((a[1] / b[1] - 1.0).abs() < 0.25, "{a:?} {b:?}");
}

fn l2_on(a: &[Seismogram], b: &[Seismogram], dt: f64, horizon: f64) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let n = (horizon / dt).round() as usize;
        for k in 0..=n {
            let t = k as f64 * dt;
            let ix = ((t - x.t0) / x.dt).round() as usize;
            let iy = ((t - y.t0) / y.dt).round() as usize;
            s += (x.ux[ix] - y.ux[iy]).powi(2) + (x.uz[ix] - y.uz[iy]).powi(2);
        }
    }
    s.sqrt()
}

#[test]
fn seismograms_converge_at_second_order() {
    let d = desk_discretization();
    let src = desk_source();
    let go = |l: u32| simulate(&data_sample(), &desk_medium(), &src, &desk_geometry(), &d.level(l), &SimOptions::default()).unwrap();
    let reference = go(4);
    let e1 = l2_on(&go(1), &reference, d.dt0, src.horizon);
    let e2 = l2_on(&go(2), &reference, d.dt0, src.horizon);
    println!("errors {e1:.4e} {e2:.4e}, ratio {:.3}", e1 / e2);
    assert!((3.0..=5.0).contains(&(e1 / e2)));
}
