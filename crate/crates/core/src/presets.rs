//! Ready-made study setups.
//!
//! `paper_*` values describe the full-size crustal problem: seven layers
//! down to a half-space at 50 km, a moment-tensor source at 28 km depth
//! and three surface receivers. `desk_*` values shrink every length by a
//! factor of five and lower the source frequency so that a hierarchy of
//! several levels runs on a single core in minutes.

use crate::medium::{LayerSpec, LayeredMedium, MaterialSample, UncertaintySpec};
use crate::solver::{Discretization, Geometry, SourceSpec};

const TABLE: [(f64, f64, f64, f64, f64); 7] = [
    (10_000.0, 2500.0, 3529.0, 6034.6, 300.0),
    (10_000.0, 2500.0, 3705.0, 6335.6, 300.0),
    (10_000.0, 2500.0, 3882.0, 6638.2, 800.0),
    (5_000.0, 2500.0, 3911.0, 6687.8, 800.0),
    (5_000.0, 2900.0, 4422.7, 7562.8, 800.0),
    (10_000.0, 2900.0, 4506.4, 7705.9, 600.0),
    (f64::NAN, 2900.0, 4533.6, 7752.5, 600.0),
];

const MOMENT: [[f64; 2]; 2] = [[5.5895e13, 7.9762e13], [7.9762e13, -2.5698e14]];

fn medium_scaled(scale: f64) -> LayeredMedium {
    let layers = TABLE
        .iter()
        .map(|&(t, rho, vs, vp, q)| LayerSpec {
            thickness: (!t.is_nan()).then_some(t * scale),
            rho_bar: rho,
            vs_bar: vs,
            vp_bar: vp,
            q_factor: q,
        })
        .collect();
    LayeredMedium::new(layers).expect("preset medium is valid")
}

pub fn paper_medium() -> LayeredMedium {
    medium_scaled(1.0)
}

pub fn paper_uncertainty() -> UncertaintySpec {
    UncertaintySpec { q: 0.1, r: 0.1, nu_lb: 1.64, nu_ub: 1.78 }
}

pub fn paper_source() -> SourceSpec {
    SourceSpec {
        x_s: 86_500.0,
        depth: 28_000.0,
        moment: MOMENT,
        f0: 2.0,
        t_c: 0.0,
        t0: -0.6,
        horizon: 25.0,
    }
}

pub fn paper_data_source() -> SourceSpec {
    SourceSpec { x_s: 84_000.0, ..paper_source() }
}

pub fn paper_geometry() -> Geometry {
    Geometry {
        offsets: vec![11_242.0, 23_849.0, 32_724.0],
        receiver_depth: 0.0,
        pad_x: 195_000.0,
        pad_z: 125_000.0,
    }
}

pub fn paper_data_geometry() -> Geometry {
    Geometry { offsets: vec![16_242.0, 28_849.0, 37_724.0], ..paper_geometry() }
}

pub fn paper_discretization() -> Discretization {
    Discretization { h0: 2500.0, dt0: 6.25e-3, c_cfl: 0.45 }
}

/// Observation rate of the full-size synthetic data, Hz.
pub const PAPER_RATE: f64 = 160.0;
/// Noise level of the full-size synthetic data, m.
pub const PAPER_SIGMA: f64 = 2.5e-3;

/// Material that generated the synthetic data.
pub fn data_sample() -> MaterialSample {
    MaterialSample {
        rho: vec![2439.9, 2715.8, 2747.1, 2562.0, 2862.8, 2862.0, 2809.7],
        vs: vec![3498.0, 3654.9, 3690.9, 4045.0, 4491.8, 4691.5, 4969.8],
        vp: vec![5737.7, 6346.0, 6568.5, 7038.2, 7647.2, 7753.4, 8790.9],
    }
}

/// Material of the attenuation on/off comparison.
pub fn attenuation_sample() -> MaterialSample {
    MaterialSample {
        rho: vec![2333.8, 2539.0, 2416.8, 2521.5, 2793.1, 2822.0, 2811.9],
        vs: vec![3789.8, 3562.3, 3726.8, 3724.4, 4062.9, 4422.7, 4612.2],
        vp: vec![6503.4, 6117.5, 6157.8, 6176.2, 7228.6, 7602.2, 7733.8],
    }
}

const DESK_SCALE: f64 = 0.2;

pub fn desk_medium() -> LayeredMedium {
    medium_scaled(DESK_SCALE)
}

pub fn desk_source() -> SourceSpec {
    SourceSpec {
        x_s: 0.0,
        depth: 28_000.0 * DESK_SCALE,
        moment: MOMENT,
        f0: 1.0,
        t_c: 0.0,
        t0: -1.2,
        horizon: 5.0,
    }
}

pub fn desk_data_source() -> SourceSpec {
    SourceSpec { x_s: -2_500.0 * DESK_SCALE, ..desk_source() }
}

pub fn desk_geometry() -> Geometry {
    let g = paper_geometry();
    Geometry {
        offsets: g.offsets.iter().map(|o| o * DESK_SCALE).collect(),
        receiver_depth: 0.0,
        pad_x: 32_000.0,
        pad_z: 32_000.0,
    }
}

pub fn desk_data_geometry() -> Geometry {
    let g = paper_data_geometry();
    Geometry { offsets: g.offsets.iter().map(|o| o * DESK_SCALE).collect(), ..desk_geometry() }
}

pub fn desk_discretization() -> Discretization {
    Discretization { h0: 1000.0, dt0: 0.04, c_cfl: 0.45 }
}

/// Observation rate of the desk-size synthetic data, Hz.
pub const DESK_RATE: f64 = 25.0;
/// Desk-size noise level as a fraction of the noiseless peak displacement.
pub const DESK_SIGMA_FRACTION: f64 = 0.01;
