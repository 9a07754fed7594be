//! Plan reports: per-stage cumulative builds, cost table, operating totals
//! and convergence data, written as text, CSV and JSON.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::benders::{build_schedule, IterationRecord, PlanOutcome, PlanStatus};
use crate::error::{Error, Result};
use crate::formulation::{CostBreakdown, VarKey};
use crate::hurricane::{HurricaneSpeedScenario, ResilienceContingency};
use crate::system::{LineKind, PowerSystem};

/// k$ per 10^6 $.
const K_PER_MILLION: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineBuild {
    pub line: u32,
    pub from_bus: u32,
    pub to_bus: u32,
    pub corridor: u32,
    pub circuits: u32,
    pub first_stage: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BesCapacity {
    pub bus: u32,
    pub power_mw: f64,
    pub energy_mwh: f64,
}

/// Cumulative installed assets at the end of one stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: usize,
    pub ac_lines: Vec<LineBuild>,
    pub dc_lines: Vec<LineBuild>,
    pub wind_mw: Vec<(u32, f64)>,
    pub bes: Vec<BesCapacity>,
}

/// Costs in 10^6 $.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostTable {
    pub ac_lines: f64,
    pub dc_lines: f64,
    pub wind: f64,
    pub bes: f64,
    pub generation: f64,
    pub shed_and_curtailment: f64,
    pub tic: f64,
    pub toc: f64,
    pub tpc: f64,
}

impl CostTable {
    /// `tpc` is taken as given; components come from `breakdown` (k$).
    pub fn new(breakdown: &CostBreakdown, tpc_k: f64) -> Self {
        let m = |v: f64| v / K_PER_MILLION;
        Self {
            ac_lines: m(breakdown.al),
            dc_lines: m(breakdown.dl),
            wind: m(breakdown.wf),
            bes: m(breakdown.be),
            generation: m(breakdown.gf),
            shed_and_curtailment: m(breakdown.lwc),
            tic: m(breakdown.investment()),
            toc: m(breakdown.operation()),
            tpc: m(tpc_k),
        }
    }

    pub fn rows(&self) -> [(&'static str, f64); 9] {
        [
            ("AL", self.ac_lines),
            ("DL", self.dc_lines),
            ("WF", self.wind),
            ("BE", self.bes),
            ("GF", self.generation),
            ("LWC", self.shed_and_curtailment),
            ("TIC", self.tic),
            ("TOC", self.toc),
            ("TPC", self.tpc),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Convergence {
    pub status: PlanStatus,
    pub iterations: usize,
    /// 10^6 $
    pub lower_bound: f64,
    /// 10^6 $
    pub upper_bound: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub index: usize,
    pub failed_lines: Vec<u32>,
    pub probability: f64,
    /// Plan cost under this scenario, 10^6 $.
    pub total_cost: f64,
    /// Load shed, MWh over the horizon.
    pub load_shed_mwh: f64,
    pub wind_curtailment_mwh: f64,
    pub worst: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanReport {
    pub stages: Vec<StageReport>,
    pub costs: CostTable,
    /// MWh over the horizon in the scenario that sets the plan cost.
    pub wind_curtailment_mwh: f64,
    pub load_shed_mwh: f64,
    pub convergence: Convergence,
    pub iterations: Vec<IterationRecord>,
    pub scenarios: Vec<ScenarioSummary>,
    pub speeds: Vec<HurricaneSpeedScenario>,
    pub contingencies: Vec<ResilienceContingency>,
}

/// Hour-weighted totals of load shed and curtailment, summed over stages.
fn energy_totals(outcome: &PlanOutcome, k: usize, weights: &[f64]) -> (f64, f64) {
    let model = &outcome.subproblems[k].model;
    let x = &outcome.solutions[k].x;
    let (mut shed, mut curt) = (0.0, 0.0);
    for (v, &val) in model.vars.iter().zip(x) {
        match v.key {
            VarKey::Ls { h, .. } => shed += weights[h - 1] * val,
            VarKey::Curt { h, .. } => curt += weights[h - 1] * val,
            _ => {}
        }
    }
    (shed, curt)
}

pub fn render_report(system: &PowerSystem, outcome: &PlanOutcome, hour_weights: &[f64]) -> PlanReport {
    let worst = outcome.worst_scenario;
    let sub = &outcome.subproblems[worst];
    let x = &outcome.solutions[worst].x;
    let schedule = build_schedule(sub, &outcome.ybar);

    let stages = (1..=system.config.stages)
        .map(|s| {
            let mut ac_lines = Vec::new();
            let mut dc_lines = Vec::new();
            for &(line, corridor, first, kind) in &schedule {
                if first > s {
                    continue;
                }
                let l = system.line(line).expect("scheduled line exists");
                let b = LineBuild {
                    line,
                    from_bus: l.from_bus,
                    to_bus: l.to_bus,
                    corridor,
                    circuits: l.circuits,
                    first_stage: first,
                };
                match kind {
                    LineKind::CandidateDc => dc_lines.push(b),
                    _ => ac_lines.push(b),
                }
            }
            let value = |key: VarKey| sub.model.value(x, &key).unwrap_or(0.0).max(0.0);
            let wind_mw = system
                .buses
                .iter()
                .filter(|b| b.is_wf_candidate)
                .map(|b| (b.id, value(VarKey::Pw { s, bus: b.id })))
                .collect();
            let bes = system
                .buses
                .iter()
                .filter(|b| b.is_bes_candidate)
                .map(|b| BesCapacity {
                    bus: b.id,
                    power_mw: value(VarKey::C { s, bus: b.id }),
                    energy_mwh: value(VarKey::S { s, bus: b.id }),
                })
                .collect();
            StageReport {
                stage: s,
                ac_lines,
                dc_lines,
                wind_mw,
                bes,
            }
        })
        .collect();

    let costs = CostTable::new(&outcome.costs, outcome.upper_bound);
    let (load_shed_mwh, wind_curtailment_mwh) = energy_totals(outcome, worst, hour_weights);
    let investment = sub.investment(&outcome.ybar);
    let scenarios = outcome
        .scenarios
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let (shed, curt) = energy_totals(outcome, k, hour_weights);
            ScenarioSummary {
                index: k,
                failed_lines: f.failed.clone(),
                probability: f.probability,
                total_cost: (investment + outcome.solutions[k].objective) / K_PER_MILLION,
                load_shed_mwh: shed,
                wind_curtailment_mwh: curt,
                worst: k == worst,
            }
        })
        .collect();

    PlanReport {
        stages,
        costs,
        wind_curtailment_mwh,
        load_shed_mwh,
        convergence: Convergence {
            status: outcome.status,
            iterations: outcome.iterations.len(),
            lower_bound: outcome.lower_bound / K_PER_MILLION,
            upper_bound: outcome.upper_bound / K_PER_MILLION,
            gap: outcome.gap(),
        },
        iterations: outcome.iterations.clone(),
        scenarios,
        speeds: outcome.speeds.clone(),
        contingencies: outcome.contingencies.clone(),
    }
}

/// Fixed-precision number with negative zero folded to zero.
fn num(v: f64) -> String {
    let v = if v.abs() < 5e-7 { 0.0 } else { v };
    format!("{v:.6}")
}

impl PlanReport {
    pub fn plan_csv(&self) -> String {
        let mut out = String::from("stage,asset,id,from_bus,to_bus,corridor,circuits,power_mw,energy_mwh\n");
        for st in &self.stages {
            for (asset, lines) in [("ac_line", &st.ac_lines), ("dc_line", &st.dc_lines)] {
                for l in lines {
                    let _ = writeln!(
                        out,
                        "{},{asset},{},{},{},{},{},,",
                        st.stage, l.line, l.from_bus, l.to_bus, l.corridor, l.circuits
                    );
                }
            }
            for &(bus, mw) in &st.wind_mw {
                let _ = writeln!(out, "{},wind,{bus},,,,,{},", st.stage, num(mw));
            }
            for b in &st.bes {
                let _ = writeln!(out, "{},bes,{},,,,,{},{}", st.stage, b.bus, num(b.power_mw), num(b.energy_mwh));
            }
        }
        out
    }

    pub fn costs_csv(&self) -> String {
        let mut out = String::from("component,cost_musd\n");
        for (name, v) in self.costs.rows() {
            let _ = writeln!(out, "{name},{}", num(v));
        }
        out
    }

    pub fn iterations_csv(&self) -> String {
        let mut out = String::from("iter,LB,UB,gap,n_opt_cuts,n_feas_cuts,worst_scenario\n");
        let m = |v: f64| if v.is_finite() { num(v / K_PER_MILLION) } else { "inf".to_string() };
        for r in &self.iterations {
            let gap = if r.gap.is_finite() { format!("{:.6e}", r.gap) } else { "inf".to_string() };
            let worst = r.worst_scenario.map(|w| w.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{gap},{},{},{worst}",
                r.iter,
                m(r.lb),
                m(r.ub),
                r.n_opt_cuts,
                r.n_feas_cuts
            );
        }
        out
    }

    pub fn scenarios_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            speeds: &'a [HurricaneSpeedScenario],
            scenarios: &'a [ScenarioSummary],
            contingencies: &'a [ResilienceContingency],
        }
        serde_json::to_string_pretty(&Doc {
            speeds: &self.speeds,
            scenarios: &self.scenarios,
            contingencies: &self.contingencies,
        })
        .map_err(|e| Error::Internal(format!("serializing scenarios: {e}")))
    }

    pub fn plan_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Co-planning results (cumulative installed capacity per stage)");
        let _ = writeln!(out);
        for st in &self.stages {
            let _ = writeln!(out, "Stage {}", st.stage);
            let lines = |ls: &[LineBuild]| -> String {
                if ls.is_empty() {
                    return "-".into();
                }
                ls.iter()
                    .map(|l| format!("{}-{} (line {}, corridor {}, {} circuit{})", l.from_bus, l.to_bus, l.line, l.corridor, l.circuits, if l.circuits == 1 { "" } else { "s" }))
                    .collect::<Vec<_>>()
                    .join("; ")
            };
            let _ = writeln!(out, "  HVAC lines : {}", lines(&st.ac_lines));
            let _ = writeln!(out, "  HVDC lines : {}", lines(&st.dc_lines));
            let wind: Vec<String> = st
                .wind_mw
                .iter()
                .filter(|w| w.1 > 5e-7)
                .map(|(b, mw)| format!("bus {b}: {mw:.2} MW"))
                .collect();
            let _ = writeln!(out, "  Wind farms : {}", if wind.is_empty() { "-".into() } else { wind.join("; ") });
            let bes: Vec<String> = st
                .bes
                .iter()
                .filter(|b| b.power_mw > 5e-7 || b.energy_mwh > 5e-7)
                .map(|b| format!("bus {}: {:.2} MW / {:.2} MWh", b.bus, b.power_mw, b.energy_mwh))
                .collect();
            let _ = writeln!(out, "  Storage    : {}", if bes.is_empty() { "-".into() } else { bes.join("; ") });
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Costs (10^6 $)");
        for (name, v) in self.costs.rows() {
            let _ = writeln!(out, "  {name:<4} {:>16}", num(v));
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Wind curtailment : {} MWh", num(self.wind_curtailment_mwh));
        let _ = writeln!(out, "Load shed        : {} MWh", num(self.load_shed_mwh));
        let _ = writeln!(out);
        let c = &self.convergence;
        let status = match c.status {
            PlanStatus::Converged => "converged",
            PlanStatus::IterationLimit => "iteration limit reached",
        };
        let _ = writeln!(out, "Decomposition: {status} after {} iterations", c.iterations);
        let _ = writeln!(out, "  LB {}  UB {}  gap {:.3e}", num(c.lower_bound), num(c.upper_bound), c.gap);
        let _ = writeln!(out, "  scenarios evaluated: {} (worst: {})", self.scenarios.len(), self.scenarios.iter().find(|s| s.worst).map_or(0, |s| s.index));
        out
    }

    /// Writes `plan.txt`, `plan.csv`, `costs.csv`, `iterations.csv` and
    /// `scenarios.json` into `dir`.
    pub fn write_all(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let io = |e: std::io::Error, what: &Path| Error::Io(format!("{}: {e}", what.display()));
        fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
        let files = [
            ("plan.txt", self.plan_text()),
            ("plan.csv", self.plan_csv()),
            ("costs.csv", self.costs_csv()),
            ("iterations.csv", self.iterations_csv()),
            ("scenarios.json", self.scenarios_json()?),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| io(e, &path))?;
        }
        Ok(())
    }
}
