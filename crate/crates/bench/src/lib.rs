//! Deterministic workloads shared by the Criterion benchmarks in `benches/`.

use std::f64::consts::TAU;
use std::path::PathBuf;

use gridplan::lp::{LpProblem, Relation, Sense};
use gridplan::{HourlySeries, PowerSystem, RepresentativeHour, RepresentativeSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Feasible, bounded LP: `max c'x` with `A x <= b`, `x >= 0`, all data
/// positive.
pub fn dense_lp(n: usize, m: usize, seed: u64) -> LpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = LpProblem::new(Sense::Maximize, n);
    p.objective = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
    for _ in 0..m {
        let row = (0..n).map(|j| (j, rng.random_range(0.1..5.0))).collect();
        p.add_constraint(row, Relation::Le, rng.random_range(10.0..100.0));
    }
    p
}

/// A year of hourly per-unit load and wind with seasonal and daily shape.
pub fn synthetic_year(seed: u64) -> HourlySeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut load, mut wind) = (Vec::with_capacity(8760), Vec::with_capacity(8760));
    let mut gust = 0.0f64;
    for t in 0..8760 {
        let day = (t / 24) as f64;
        let hour = (t % 24) as f64;
        let season = (TAU * day / 365.0).sin();
        let l = 0.62 + 0.12 * season + 0.13 * (TAU * (hour - 8.0) / 24.0).sin() + rng.random_range(-0.03..0.03);
        gust = 0.9 * gust + rng.random_range(-0.08..0.08);
        let w = 0.38 - 0.15 * season + 0.05 * (TAU * hour / 24.0).cos() + gust;
        load.push(l.clamp(0.0, 1.0));
        wind.push(w.clamp(0.0, 1.0));
    }
    HourlySeries::new(load, wind, "synthetic").expect("values are clamped to [0, 1]")
}

/// The sample system shipped in `data/`.
pub fn sample_system() -> PowerSystem {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/toy_system.json");
    PowerSystem::load(path).expect("sample system loads")
}

/// `n` representative hours spread over load and wind levels.
pub fn flat_hours(n: usize) -> RepresentativeSet {
    let hours = (0..n)
        .map(|k| {
            let x = (k as f64 + 0.5) / n as f64;
            RepresentativeHour { load: 0.5 + 0.5 * x, wind: 1.0 - 0.8 * x, weight: 8760.0 / n as f64 }
        })
        .collect();
    RepresentativeSet::from_hours(hours, "bench")
}
