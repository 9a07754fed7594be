//! Small hand-built systems shared by integration tests.

use gridplan::hurricane::{HurricaneConfig, SpeedDistribution};
use gridplan::{Generator, LineKind, PowerSystem, RepresentativeHour, RepresentativeSet, SystemFile};

use super::plan_oracle::{base_config, bus, line};

/// Two buses joined by one long existing tie inside the hurricane zone. A
/// second corridor outside the zone can be built as a remedy.
pub fn fragile_tie() -> PowerSystem {
    let mut tie = line(1, 1, 2, LineKind::Existing, 150.0, 60.0);
    tie.in_hurricane_zone = true;
    let remedy = line(2, 1, 2, LineKind::CandidateAc, 150.0, 80.0);
    let mut config = base_config(1);
    config.load_growth = vec![0.0];
    PowerSystem::new(SystemFile {
        buses: vec![bus(1, 20.0), bus(2, 100.0)],
        lines: vec![tie, remedy],
        generators: vec![
            Generator { bus: 1, p_min: 0.0, p_max: 300.0, segment_costs: vec![10.0, 12.0], ramp_up: 300.0, ramp_down: 300.0 },
            Generator { bus: 2, p_min: 0.0, p_max: 30.0, segment_costs: vec![150.0, 160.0], ramp_up: 30.0, ramp_down: 30.0 },
        ],
        config,
    })
    .expect("valid fixture")
}

pub fn two_hours() -> RepresentativeSet {
    RepresentativeSet::from_hours(
        vec![
            RepresentativeHour { load: 1.0, wind: 0.3, weight: 3000.0 },
            RepresentativeHour { load: 0.6, wind: 0.6, weight: 5760.0 },
        ],
        "fixture",
    )
}

/// A strong hurricane that almost surely brings the tie down.
pub fn strong_hurricane() -> HurricaneConfig {
    HurricaneConfig {
        distribution: SpeedDistribution::PointMass { speed: 55.0 },
        samples: 10,
        scenarios: 1,
        ..HurricaneConfig::default()
    }
}

/// A year of hourly load and wind with seasonal and daily cycles plus
/// autocorrelated noise.
pub fn synthetic_year(seed: u64) -> gridplan::HourlySeries {
    use rand::{Rng, SeedableRng};
    use std::f64::consts::TAU;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
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
    gridplan::HourlySeries::new(load, wind, format!("synthetic-{seed}")).expect("valid series")
}
