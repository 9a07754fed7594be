//! Exhaustive planning oracle: every binary assignment is evaluated by one
//! LP that stacks the operating problem of each scenario and minimizes the
//! worst scenario cost through an epigraph variable.

use gridplan::formulation::{build_model, MilpModel, ShedMode, VarClass};
use gridplan::lp::{solve_lp, LpProblem, LpStatus, Relation, Sense};
use gridplan::{
    Bus, FailureScenario, Generator, Line, LineKind, PlanningConfig, PowerSystem,
    RepresentativeHour, RepresentativeSet, SystemFile,
};
use gridplan::system::{Lifetimes, VscLossCoeffs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct OracleOptimum {
    pub cost: f64,
    pub y: Vec<f64>,
}

/// Cost of one assignment, or `None` if some scenario cannot operate.
pub fn evaluate(models: &[MilpModel], y: &[f64]) -> Option<f64> {
    let base = &models[0];
    let ycols: Vec<usize> = (0..base.num_vars()).filter(|&j| base.vars[j].class == VarClass::Y).collect();
    let mut lp = LpProblem::new(Sense::Minimize, 0);
    let t = lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
    let invest: f64 = ycols.iter().zip(y).map(|(&j, &v)| base.vars[j].cost * v).sum();
    for m in models {
        let mut map = vec![usize::MAX; m.num_vars()];
        let mut fixed = vec![None; m.num_vars()];
        for (k, &j) in ycols.iter().enumerate() {
            fixed[j] = Some(y[k]);
        }
        for (j, v) in m.vars.iter().enumerate() {
            if fixed[j].is_none() {
                map[j] = lp.add_var(0.0, v.lower, v.upper);
            }
        }
        let mut epi: Vec<(usize, f64)> = vec![(t, 1.0)];
        for (j, v) in m.vars.iter().enumerate() {
            if fixed[j].is_none() && v.cost != 0.0 {
                epi.push((map[j], -v.cost));
            }
        }
        // Binary costs enter once through `invest`, not per scenario.
        lp.add_constraint(epi, Relation::Ge, 0.0);
        for row in &m.rows {
            let mut rhs = row.rhs;
            let mut coeffs = Vec::new();
            for &(j, a) in &row.coeffs {
                match fixed[j] {
                    Some(v) => rhs -= a * v,
                    None => coeffs.push((map[j], a)),
                }
            }
            if coeffs.is_empty() {
                let ok = match row.relation {
                    Relation::Ge => rhs <= 1e-9,
                    Relation::Le => rhs >= -1e-9,
                    Relation::Eq => rhs.abs() <= 1e-9,
                };
                if !ok {
                    return None;
                }
                continue;
            }
            lp.add_constraint(coeffs, row.relation, rhs);
        }
    }
    let sol = solve_lp(&lp).expect("oracle LP");
    match sol.status {
        LpStatus::Optimal => Some(invest + sol.objective),
        LpStatus::Infeasible => None,
        LpStatus::Unbounded => panic!("oracle LP unbounded"),
    }
}

/// Minimum over all binary assignments.
pub fn enumerate(system: &PowerSystem, reps: &RepresentativeSet, rc: &[FailureScenario]) -> Option<OracleOptimum> {
    let mut models = vec![build_model(system, reps, &FailureScenario::intact(), ShedMode::Standard).unwrap()];
    for f in rc {
        models.push(build_model(system, reps, f, ShedMode::Standard).unwrap());
    }
    let n = models[0].vars.iter().filter(|v| v.class == VarClass::Y).count();
    assert!(n <= 16, "too many binaries for enumeration");
    let mut best: Option<OracleOptimum> = None;
    for mask in 0..(1u32 << n) {
        let y: Vec<f64> = (0..n).map(|k| ((mask >> k) & 1) as f64).collect();
        if let Some(c) = evaluate(&models, &y) {
            if best.as_ref().is_none_or(|b| c < b.cost) {
                best = Some(OracleOptimum { cost: c, y });
            }
        }
    }
    best
}

pub fn base_config(stages: usize) -> PlanningConfig {
    PlanningConfig {
        stages,
        interest_rate: 0.05,
        lifetimes: Lifetimes { line: 40, bes: 10, wf: 20 },
        rps_alpha: 0.0,
        wind_curtail_beta: 0.4,
        hourly_shed_gamma: 0.0,
        annual_shed_phi: 0.0,
        reserve_cost_xi: 0.1,
        bes_epr: 3.0,
        base_power: 100.0,
        vsc_loss_coeffs: VscLossCoeffs { phi: 0.12, psi: 0.0029, chi: 0.00031 },
        cost_segments: 2,
        pwl_blocks: 5,
        benders_eps: 1e-3,
        load_growth: (0..stages).map(|s| 0.05 * s as f64).collect(),
        tower_spacing: 500.0,
        angle_bound: 0.6,
        reference_bus: 1,
        bes_charge_eff: 0.9,
        bes_discharge_eff: 0.9,
        reserve_wind_share: 0.05,
        reserve_load_share: 0.03,
        weighted_annual_sums: false,
        operational_binaries: false,
    }
}

pub fn bus(id: u32, load: f64) -> Bus {
    Bus {
        id,
        peak_load: load,
        is_bes_candidate: false,
        is_wf_candidate: false,
        wf_capacity_max: 0.0,
        bes_power_max: 0.0,
        bes_energy_max: 0.0,
        bes_energy_cost: 0.0,
        bes_power_cost: 0.0,
        wf_invest_cost: 0.0,
        shed_cost: 1000.0,
        curtail_cost: 50.0,
    }
}

pub fn line(id: u32, from: u32, to: u32, kind: LineKind, flow_max: f64, length: f64) -> Line {
    Line {
        id,
        from_bus: from,
        to_bus: to,
        kind,
        circuits: 1,
        susceptance_pu: (kind != LineKind::CandidateDc).then_some(4.0),
        flow_max,
        length,
        invest_cost: 0.4,
        row_cost: 0.03,
        substation_cost: if kind == LineKind::Existing { 0.0 } else { 1.0 },
        vsc_cost: (kind == LineKind::CandidateDc).then_some(0.02),
        in_hurricane_zone: false,
        corridor_count: 1,
    }
}

pub fn generator(bus: u32, p_min: f64, p_max: f64, cost: f64) -> Generator {
    Generator {
        bus,
        p_min,
        p_max,
        segment_costs: vec![cost, cost * 1.3],
        ramp_up: p_max,
        ramp_down: p_max,
    }
}

pub struct Toy {
    pub system: PowerSystem,
    pub reps: RepresentativeSet,
    pub rc: Vec<FailureScenario>,
}

/// Random toy: 3 to 5 buses on an existing spanning tree, up to four
/// binaries, cheap generation far from the load, optional wind, storage and
/// HVDC, and up to two contingencies on hurricane-zone lines.
pub fn random_toy(seed: u64) -> Toy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_bus: u32 = rng.random_range(3..=5);
    let stages: usize = rng.random_range(1..=2);
    let hours: usize = rng.random_range(2..=4);
    let mut buses: Vec<Bus> = (1..=n_bus)
        .map(|i| bus(i, if i == 1 { 0.0 } else { rng.random_range(20.0..80.0f64).round() }))
        .collect();
    let mut lines = Vec::new();
    let mut id = 1;
    for i in 2..=n_bus {
        let parent = rng.random_range(1..i);
        let cap = rng.random_range(30.0..120.0f64).round();
        let mut l = line(id, parent, i, LineKind::Existing, cap, rng.random_range(5.0..40.0f64).round());
        l.in_hurricane_zone = rng.random_bool(0.5);
        lines.push(l);
        id += 1;
    }
    let max_cands = if stages == 2 { 2 } else { 4 };
    let n_cand = rng.random_range(1..=max_cands);
    for _ in 0..n_cand {
        let a = rng.random_range(1..=n_bus);
        let mut b = rng.random_range(1..=n_bus);
        while b == a {
            b = rng.random_range(1..=n_bus);
        }
        let kind = if rng.random_bool(0.25) { LineKind::CandidateDc } else { LineKind::CandidateAc };
        let mut l = line(id, a.min(b), a.max(b), kind, rng.random_range(40.0..120.0f64).round(), rng.random_range(5.0..40.0f64).round());
        l.in_hurricane_zone = rng.random_bool(0.3);
        lines.push(l);
        id += 1;
    }
    let total: f64 = buses.iter().map(|b| b.peak_load).sum();
    let mut generators = vec![generator(1, 0.0, (total * 1.6).ceil(), rng.random_range(8.0..15.0f64).round())];
    // Expensive local units; without them some buses rely on new lines.
    let local_share = if rng.random_bool(0.5) { 1.3 } else { 0.5 };
    for b in buses.iter().skip(1) {
        if rng.random_bool(0.6) {
            generators.push(generator(b.id, 0.0, (b.peak_load * local_share).ceil(), rng.random_range(60.0..120.0f64).round()));
        }
    }
    if rng.random_bool(0.4) {
        let k = rng.random_range(1..n_bus as usize);
        let b = &mut buses[k];
        b.is_wf_candidate = true;
        b.wf_capacity_max = 60.0;
        b.wf_invest_cost = 0.05;
    }
    if rng.random_bool(0.3) {
        let k = rng.random_range(1..n_bus as usize);
        let b = &mut buses[k];
        b.is_bes_candidate = true;
        b.bes_power_max = 20.0;
        b.bes_energy_max = 80.0;
        b.bes_energy_cost = 2000.0;
        b.bes_power_cost = 20000.0;
    }
    let mut config = base_config(stages);
    if rng.random_bool(0.5) {
        config.hourly_shed_gamma = 0.2;
        config.annual_shed_phi = 0.1;
    }
    let system = PowerSystem::new(SystemFile { buses, lines, generators, config }).expect("valid toy");
    let reps = RepresentativeSet::from_hours(
        (0..hours)
            .map(|_| RepresentativeHour {
                load: rng.random_range(0.5..1.0f64),
                wind: rng.random_range(0.1..0.9f64),
                weight: 8760.0 / hours as f64,
            })
            .collect(),
        "toy",
    );
    let hz: Vec<u32> = system.lines.iter().filter(|l| l.in_hurricane_zone).map(|l| l.id).collect();
    let n_rc = if hz.is_empty() { 0 } else { rng.random_range(0..=2usize) };
    let mut rc: Vec<FailureScenario> = Vec::new();
    for _ in 0..n_rc {
        let l = hz[rng.random_range(0..hz.len())];
        if rc.iter().all(|f| f.failed != vec![l]) {
            rc.push(FailureScenario { failed: vec![l], states: vec![true], probability: 0.5, speed_index: 0 });
        }
    }
    Toy { system, reps, rc }
}
