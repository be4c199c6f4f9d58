//! Self-convergence of the desk-scale seismograms.
//!
//! ```text
//! cargo run --release --example convergence -- [top level] [attenuation 0|1]
//! ```
//!
//! Solves one fixed material at levels `0..=top`, restricts every solution
//! to the 25 Hz observation grid and prints the cost of each level and its
//! distance to the finest one.

use seismlmc::data::restrict;
use seismlmc::presets;
use seismlmc::solver::{measure_work, simulate, Seismogram, SimOptions};

fn distance(a: &[Seismogram], b: &[Seismogram]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.ux.iter().zip(&y.ux).chain(x.uz.iter().zip(&y.uz)))
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn main() {
    let mut args = std::env::args().skip(1);
    let top: u32 = args.next().map_or(4, |s| s.parse().expect("top level"));
    let attenuation = args.next().is_none_or(|s| s == "1");

    let medium = presets::desk_medium();
    let source = presets::desk_data_source();
    let geometry = presets::desk_data_geometry();
    let d = presets::desk_discretization();
    let opts = SimOptions { attenuation, ..Default::default() };
    let sample = presets::data_sample();

    let runs: Vec<Vec<Seismogram>> = (0..=top)
        .map(|l| {
            let (sim, work) = measure_work(|| simulate(&sample, &medium, &source, &geometry, &d.level(l), &opts));
            println!("level {l}: {work:.3} s");
            restrict(&sim.expect("solve"), presets::DESK_RATE, source.horizon).expect("observation grid")
        })
        .collect();
    let finest = &runs[top as usize];
    let errors: Vec<f64> = runs[..top as usize].iter().map(|r| distance(r, finest)).collect();
    for (l, e) in errors.iter().enumerate() {
        print!("level {l}: distance to level {top} {e:.4e}");
        match errors.get(l + 1) {
            Some(next) => println!(", observed order {:.3}", (e / next).log2()),
            None => println!(),
        }
    }
}
