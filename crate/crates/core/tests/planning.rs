use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seismlmc::calibrate::{fit_rate_models, run_verification, Bootstrap, MeasuredRates, RateModels, Rates};
use seismlmc::estimators::{run_samples, Provenance, SampleKind, SamplePool};
use seismlmc::model::SurrogateModel;
use seismlmc::plan::{optimal_samples, select_hierarchy, select_mc, tolerance_schedule, LevelModels, Plan};
use seismlmc::surrogate::SurrogateSpec;
use seismlmc::Error;

fn random_models(rng: &mut ChaCha8Rng) -> RateModels {
    let l_ver = rng.random_range(1..=4u32);
    let n = l_ver as usize;
    let mut w = rng.random_range(1e-3..1.0);
    let mut work = Vec::new();
    let mut base_work = Vec::new();
    for _ in 0..=n {
        base_work.push(w);
        work.push(w * rng.random_range(1.05..1.3));
        w *= rng.random_range(4.0..12.0);
    }
    let mut b = rng.random_range(0.01..1.0);
    let mut bias = Vec::new();
    let mut v = rng.random_range(1e-3..1.0);
    let mut var = Vec::new();
    for _ in 0..n {
        bias.push(b);
        var.push(v);
        b *= rng.random_range(0.1..0.6);
        v *= rng.random_range(0.02..0.5);
    }
    RateModels {
        rates: Rates {
            gamma: rng.random_range(2.0..4.0),
            q_w: rng.random_range(1.0..3.0),
            q_s: rng.random_range(2.0..6.0),
        },
        l_ver,
        work,
        base_work,
        bias_anchor: bias,
        base_variance: (0..=n).map(|_| rng.random_range(0.5..2.0)).collect(),
        correction_variance: var,
        diagnostics: Vec::new(),
        measured: MeasuredRates { gamma: f64::NAN, q_w: f64::NAN, q_s: f64::NAN },
        config_digest: String::new(),
    }
}

/// Straightforward rescan: every (l0, L), sample counts written out from
/// the optimal-allocation formula.
fn rescan(tol: f64, c_alpha: f64, l_max: u32, m: &RateModels) -> Option<(u32, u32, Vec<u64>)> {
    let mut best: Option<(f64, u32, u32, Vec<u64>)> = None;
    for big_l in 0..=l_max {
        let bias = m.model_bias(big_l);
        if bias >= tol {
            continue;
        }
        let theta = 1.0 - bias / tol;
        for l0 in 0..=big_l {
            let v: Vec<f64> = (l0..=big_l).map(|l| m.model_variance(l, l0)).collect();
            let w: Vec<f64> = (l0..=big_l)
                .map(|l| if l == l0 { m.model_base_work(l) } else { m.model_work(l) })
                .collect();
            let s: f64 = v.iter().zip(&w).map(|(a, b)| (a * b).sqrt()).sum();
            let k = (c_alpha / (theta * tol)).powi(2);
            let n: Vec<u64> =
                v.iter().zip(&w).map(|(a, b)| ((k * (a / b).sqrt() * s).ceil() as u64).max(2)).collect();
            let cost: f64 = n.iter().zip(&w).map(|(n, b)| *n as f64 * b).sum();
            let better = match &best {
                None => true,
                Some((c, bl, b0, _)) => cost < *c || (cost == *c && (big_l, l0) < (*bl, *b0)),
            };
            if better {
                best = Some((cost, big_l, l0, n));
            }
        }
    }
    best.map(|(_, l, l0, n)| (l0, l, n))
}

#[test]
fn planner_matches_independent_rescan() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0;
    while checked < 50 {
        let m = random_models(&mut rng);
        let l_max = m.l_ver + rng.random_range(0..4);
        let tol = m.model_bias(rng.random_range(0..=l_max)) * rng.random_range(1.01..4.0);
        let oracle = rescan(tol, 2.0, l_max, &m);
        match select_hierarchy(tol, 2.0, l_max, &m) {
            Ok(p) => {
                assert_eq!(Some((p.l0, p.l_top, p.samples.clone())), oracle);
                check_invariants(&p, &m);
            }
            Err(e) => panic!("{e} with oracle {oracle:?}"),
        }
        checked += 1;
    }
}

fn check_invariants(p: &Plan, m: &RateModels) {
    assert!(p.l0 <= p.l_top);
    assert!(p.samples.iter().all(|&n| n >= 2));
    assert!(p.predicted_bias < p.tol);
    assert!((p.theta - (1.0 - p.predicted_bias / p.tol)).abs() < 1e-15);
    let v: f64 = p.levels().zip(&p.samples).map(|(l, &n)| m.model_variance(l, p.l0) / n as f64).sum();
    assert!(v <= p.variance_budget() * (1.0 + 1e-12));
}

#[test]
fn infeasible_tolerance_reports_best_bias() {
    let m = random_models(&mut ChaCha8Rng::seed_from_u64(3));
    let tol = m.model_bias(2) * 0.5;
    match select_hierarchy(tol, 2.0, 2, &m) {
        Err(Error::Infeasible { best_bias, .. }) => assert_eq!(best_bias, m.model_bias(2)),
        other => panic!("{other:?}"),
    }
    assert!(matches!(select_mc(tol, 2.0, 2, &m), Err(Error::Infeasible { .. })));
}

#[test]
fn optimal_samples_meet_the_variance_budget() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let k = rng.random_range(1..6);
        let v: Vec<f64> = (0..k).map(|_| rng.random_range(1e-6..1.0)).collect();
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(1e-3..100.0)).collect();
        let (tol, theta) = (rng.random_range(1e-3..1.0), rng.random_range(0.05..0.95));
        let n = optimal_samples(tol, theta, 2.0, &v, &w).unwrap();
        let total: f64 = v.iter().zip(&n).map(|(v, n)| v / *n as f64).sum();
        assert!(total <= (theta * tol / 2.0).powi(2) * (1.0 + 1e-12));
    }
}

fn surrogate_models(spec: &SurrogateSpec, l_ver: u32, counts: u64, run: u64) -> RateModels {
    let model = SurrogateModel(*spec);
    let mut pool = SamplePool::new(Provenance::default());
    let counts = vec![counts; l_ver as usize + 1];
    let rates = Rates { gamma: spec.gamma, q_w: spec.q_w, q_s: spec.q_s() };
    run_verification(&model, run, &counts, &mut pool, None, 1, rates, Bootstrap::default()).unwrap()
}

#[test]
fn predicted_work_is_monotone_in_tolerance() {
    let m = surrogate_models(&SurrogateSpec::default(), 3, 100, 1);
    let tols = tolerance_schedule(0.3, 16);
    for pick in [select_hierarchy::<RateModels>, select_mc::<RateModels>] {
        let work: Vec<f64> = tols.iter().map(|&t| pick(t, 2.0, 20, &m).unwrap().predicted_work).collect();
        for w in work.windows(2) {
            assert!(w[1] >= w[0], "{work:?}");
        }
    }
}

fn slope(tols: &[f64], work: &[f64]) -> f64 {
    let x: Vec<f64> = tols.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = work.iter().map(|w| w.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    sxy / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>()
}

#[test]
fn predicted_complexity_slopes() {
    let spec = SurrogateSpec::default();
    let m = surrogate_models(&spec, 3, 200, 2);
    let tols = tolerance_schedule(1e-2, 8);
    let mlmc: Vec<f64> = tols.iter().map(|&t| select_hierarchy(t, 2.0, 30, &m).unwrap().predicted_work).collect();
    let mc: Vec<f64> = tols.iter().map(|&t| select_mc(t, 2.0, 30, &m).unwrap().predicted_work).collect();
    let (a, b) = (slope(&tols, &mlmc), slope(&tols, &mc));
    assert!((a + 2.0).abs() <= 0.2, "MLMC slope {a}");
    let expect = -(2.0 + spec.gamma / spec.q_w);
    assert!((b - expect).abs() <= 0.3, "MC slope {b}");
}

#[test]
fn mc_picks_smallest_feasible_level_when_work_dominates() {
    let m = surrogate_models(&SurrogateSpec { gamma: 6.0, ..Default::default() }, 3, 100, 3);
    for t in tolerance_schedule(0.2, 10) {
        let p = select_mc(t, 2.0, 20, &m).unwrap();
        let smallest = (0..=20).find(|&l| m.model_bias(l) < t).unwrap();
        assert_eq!(p.l0, smallest);
    }
}

#[test]
fn surrogate_calibration_recovers_rates() {
    let spec = SurrogateSpec::default();
    let m = surrogate_models(&spec, 4, 400, 4);
    assert!((m.measured.q_w - spec.q_w).abs() <= 0.1, "{:?}", m.measured);
    assert!((m.measured.gamma - spec.gamma).abs() < 1e-9);
    for l in 0..=7 {
        // coupled samples pay for both levels
        let pair = spec.work(l) + if l > 0 { spec.work(l - 1) } else { 0.0 };
        assert!((m.model_work(l) / pair - 1.0).abs() < 1e-12);
        assert!((m.model_base_work(l) / spec.work(l) - 1.0).abs() < 1e-12);
    }
    for l in 1..=7 {
        let ratio = m.model_variance(l, 0) / spec.exact_correction_variance(l);
        assert!((0.5..=2.0).contains(&ratio), "level {l}: {ratio}");
    }
    // The next-level correction proxy sees a fraction 1 - 2^-q_w of the
    // true bias, up to the bootstrap margin.
    for l in 0..=7 {
        let ratio = m.model_bias(l) / spec.exact_bias(l);
        assert!((0.7..0.9).contains(&ratio), "level {l}: {ratio}");
    }
}

#[test]
fn models_are_monotone() {
    let m = surrogate_models(&SurrogateSpec::default(), 3, 50, 6);
    for l in 0..12 {
        assert!(m.model_work(l + 1) >= m.model_work(l));
        assert!(m.model_bias(l + 1) <= m.model_bias(l));
        if l >= 1 {
            assert!(m.model_variance(l + 1, 0) <= m.model_variance(l, 0));
        }
    }
}

#[test]
fn fit_needs_two_samples_per_level() {
    let model = SurrogateModel(SurrogateSpec::default());
    let mut pool = SamplePool::new(Provenance::default());
    run_samples(&model, 1, 0, SampleKind::Fine, 5, &mut pool, None, 1).unwrap();
    run_samples(&model, 1, 1, SampleKind::Coupled, 1, &mut pool, None, 1).unwrap();
    let r = fit_rate_models(&pool, Rates::default(), 1, Bootstrap::default(), "");
    assert!(matches!(r, Err(Error::InsufficientSamples { level: 1, .. })));
}

#[test]
fn rate_models_round_trip_as_json() {
    let m = surrogate_models(&SurrogateSpec::default(), 2, 20, 7);
    let back: RateModels = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(back.work, m.work);
    assert_eq!(LevelModels::bias(&back, 5), m.model_bias(5));
}
