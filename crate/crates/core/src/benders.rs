//! Benders decomposition of the co-planning MILP.
//!
//! The master problem holds the binary decisions and an epigraph variable
//! `Z`. Each failure scenario contributes an operating subproblem; its
//! optimal duals give optimality cuts and its infeasibility certificates give
//! feasibility cuts. The plan is evaluated against the worst scenario.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctpc::RepresentativeSet;
use crate::error::{Error, Result};
use crate::formulation::{
    build_model, partition_compact, Block, CostBreakdown, MilpModel, ShedMode, VarClass, VarKey,
};
use crate::hurricane::{
    normalize_risk, resilience_risk_index, FailureScenario, HurricaneConfig, HurricaneSpeedScenario,
    ResilienceContingency,
};
use crate::lp::{
    farkas_margin, solve_lp, solve_mip, LpProblem, LpStatus, MipStatus, Relation, Sense,
};
use crate::system::{LineKind, PowerSystem};

/// Environment variable that sets the worker count for scenario solves.
pub const THREADS_ENV: &str = "GRIDPLAN_THREADS";

const CERT_TOL: f64 = 1e-7;

/// How subproblem duals are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DspRoute {
    /// Solve the primal operating LP and read shadow prices and Farkas rays.
    Primal,
    /// Solve the dual operating LP and the normalized ray problem directly.
    ExplicitDual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BendersOptions {
    pub eps: f64,
    pub max_iterations: usize,
    /// One optimality cut per scenario; otherwise only the worst scenario
    /// contributes a cut.
    pub multi_cut: bool,
    pub route: DspRoute,
    /// Worker threads; `None` reads the environment, then uses rayon's default.
    pub threads: Option<usize>,
}

impl Default for BendersOptions {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            max_iterations: 200,
            multi_cut: true,
            route: DspRoute::Primal,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceOptions {
    pub hurricane: HurricaneConfig,
    pub seed: u64,
}

/// Operating subproblem of one scenario with the binaries moved to the
/// right-hand side.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub model: MilpModel,
    pub scenario: FailureScenario,
    /// Model columns of the binaries, in master order.
    pub y_cols: Vec<usize>,
    /// Model columns of the LP, in LP order.
    pub sub_cols: Vec<usize>,
    /// Model rows of the LP, in LP order.
    pub sub_rows: Vec<usize>,
    /// Block of each LP row.
    pub row_blocks: Vec<Block>,
    /// Binary coefficients of each LP row, indexed by master position.
    pub g: Vec<Vec<(usize, f64)>>,
    /// Rows over binaries only, indexed by master position.
    pub master_rows: Vec<(Vec<(usize, f64)>, f64)>,
    /// Cost of each binary.
    pub i_l: Vec<f64>,
    lp: LpProblem,
}

/// Optimal subproblem duals.
#[derive(Debug, Clone, PartialEq)]
pub struct DspSolution {
    pub objective: f64,
    /// Shadow prices of the LP rows (balance, equality and inequality blocks).
    pub duals: Vec<f64>,
    /// Sensitivity of the optimum to each binary.
    pub pi: Vec<f64>,
    /// Primal point in model space with the binaries filled in.
    pub x: Vec<f64>,
}

/// A direction certifying that a binary assignment admits no operation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityRay {
    pub duals: Vec<f64>,
    /// `y'b`
    pub constant: f64,
    /// `-G'y`
    pub pi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DspOutcome {
    Optimal(DspSolution),
    Infeasible(FeasibilityRay),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutKind {
    Optimality,
    Feasibility,
}

/// Optimality: `Z >= i_l'Y + constant + coeffs'Y`.
/// Feasibility: `constant + coeffs'Y <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub kind: CutKind,
    pub scenario: usize,
    pub constant: f64,
    pub coeffs: Vec<f64>,
}

impl Cut {
    pub fn optimality(scenario: usize, sol: &DspSolution, ybar: &[f64]) -> Self {
        let py: f64 = sol.pi.iter().zip(ybar).map(|(p, y)| p * y).sum();
        Self {
            kind: CutKind::Optimality,
            scenario,
            constant: sol.objective - py,
            coeffs: sol.pi.clone(),
        }
    }

    pub fn feasibility(scenario: usize, ray: &FeasibilityRay) -> Self {
        let scale = ray
            .pi
            .iter()
            .fold(ray.constant.abs(), |m, p| m.max(p.abs()))
            .max(f64::MIN_POSITIVE);
        Self {
            kind: CutKind::Feasibility,
            scenario,
            constant: ray.constant / scale,
            coeffs: ray.pi.iter().map(|p| p / scale).collect(),
        }
    }

    /// Value of the cut's affine part at `y`.
    pub fn affine(&self, y: &[f64]) -> f64 {
        self.constant + self.coeffs.iter().zip(y).map(|(a, b)| a * b).sum::<f64>()
    }
}

impl Subproblem {
    pub fn new(model: MilpModel, scenario: FailureScenario) -> Result<Self> {
        let blocks = partition_compact(&model)?;
        let y_cols = blocks.y.clone();
        let mut y_pos = vec![usize::MAX; model.num_vars()];
        for (k, &j) in y_cols.iter().enumerate() {
            y_pos[j] = k;
        }
        let mut sub_cols: Vec<usize> = Vec::new();
        for class in [VarClass::S, VarClass::W, VarClass::P, VarClass::Q] {
            sub_cols.extend_from_slice(blocks.cols(class));
        }
        sub_cols.sort_unstable();
        let mut lp_pos = vec![usize::MAX; model.num_vars()];
        let mut lp = LpProblem::new(Sense::Minimize, 0);
        for (k, &j) in sub_cols.iter().enumerate() {
            lp_pos[j] = k;
            let v = &model.vars[j];
            lp.add_var(v.cost, v.lower, v.upper);
        }
        let mut sub_rows = Vec::new();
        let mut row_blocks = Vec::new();
        let mut g = Vec::new();
        let mut master_rows = Vec::new();
        for (r, row) in model.rows.iter().enumerate() {
            let block = row.family.block();
            let mut ycoef = Vec::new();
            let mut xcoef = Vec::new();
            for &(j, a) in &row.coeffs {
                if y_pos[j] != usize::MAX {
                    ycoef.push((y_pos[j], a));
                } else {
                    xcoef.push((lp_pos[j], a));
                }
            }
            if block == Block::Master {
                master_rows.push((ycoef, row.rhs));
                continue;
            }
            lp.add_constraint(xcoef, row.relation, row.rhs);
            sub_rows.push(r);
            row_blocks.push(block);
            g.push(ycoef);
        }
        Ok(Self {
            i_l: blocks.i_l.clone(),
            model,
            scenario,
            y_cols,
            sub_cols,
            sub_rows,
            row_blocks,
            g,
            master_rows,
            lp,
        })
    }

    pub fn num_binaries(&self) -> usize {
        self.y_cols.len()
    }

    /// The operating LP with the binaries fixed at `ybar`.
    pub fn fixed_lp(&self, ybar: &[f64]) -> LpProblem {
        let mut lp = self.lp.clone();
        for (row, g) in lp.constraints.iter_mut().zip(&self.g) {
            row.rhs -= g.iter().map(|&(k, a)| a * ybar[k]).sum::<f64>();
        }
        lp
    }

    /// `-G'y`
    fn pi_of(&self, duals: &[f64]) -> Vec<f64> {
        let mut pi = vec![0.0; self.num_binaries()];
        for (g, &y) in self.g.iter().zip(duals) {
            for &(k, a) in g {
                pi[k] -= a * y;
            }
        }
        pi
    }

    fn full_x(&self, ybar: &[f64], sub_x: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.model.num_vars()];
        for (k, &j) in self.y_cols.iter().enumerate() {
            x[j] = ybar[k];
        }
        for (k, &j) in self.sub_cols.iter().enumerate() {
            x[j] = sub_x[k];
        }
        x
    }

    fn ray_from(&self, duals: Vec<f64>) -> FeasibilityRay {
        let constant = self.lp.constraints.iter().zip(&duals).map(|(c, y)| c.rhs * y).sum();
        let pi = self.pi_of(&duals);
        FeasibilityRay { duals, constant, pi }
    }

    /// Solves the operating LP at `ybar` and reads the cut data from its
    /// shadow prices or its Farkas certificate.
    pub fn solve_dsp(&self, ybar: &[f64]) -> Result<DspOutcome> {
        let lp = self.fixed_lp(ybar);
        let sol = solve_lp(&lp)?;
        match sol.status {
            LpStatus::Optimal => {
                let pi = self.pi_of(&sol.duals);
                Ok(DspOutcome::Optimal(DspSolution {
                    objective: sol.objective,
                    x: self.full_x(ybar, &sol.x),
                    duals: sol.duals,
                    pi,
                }))
            }
            LpStatus::Infeasible => {
                let y = sol.farkas.ok_or_else(|| Error::Internal("infeasible LP without certificate".into()))?;
                match farkas_margin(&lp, &y, CERT_TOL) {
                    Some(m) if m > 0.0 => Ok(DspOutcome::Infeasible(self.ray_from(y))),
                    _ => Err(Error::Internal("operating LP certificate failed verification".into())),
                }
            }
            LpStatus::Unbounded => Err(Error::Internal("operating LP is unbounded".into())),
        }
    }

    /// Dual of the operating LP as an explicit LP over `(duals, pi)`.
    /// `homogeneous` drops the cost vector and caps the balance duals at one.
    fn explicit_dual(&self, ybar: &[f64], homogeneous: bool) -> LpProblem {
        let m = self.lp.constraints.len();
        let nb = self.num_binaries();
        let mut d = LpProblem::new(Sense::Maximize, 0);
        for (row, block) in self.lp.constraints.iter().zip(&self.row_blocks) {
            let (lo, hi) = match row.relation {
                Relation::Ge => (0.0, f64::INFINITY),
                Relation::Le => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (f64::NEG_INFINITY, f64::INFINITY),
            };
            let hi = if homogeneous && *block == Block::Balance { hi.min(1.0) } else { hi };
            d.add_var(row.rhs, lo, hi);
        }
        for &yb in ybar.iter().take(nb) {
            d.add_var(yb, f64::NEG_INFINITY, f64::INFINITY);
        }
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.lp.num_vars()];
        for (i, row) in self.lp.constraints.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                cols[j].push((i, a));
            }
        }
        for (j, col) in cols.into_iter().enumerate() {
            let c = if homogeneous { 0.0 } else { self.lp.objective[j] };
            let rel = if self.lp.lower[j] == f64::NEG_INFINITY { Relation::Eq } else { Relation::Le };
            d.add_constraint(col, rel, c);
        }
        let mut gcols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nb];
        for (i, g) in self.g.iter().enumerate() {
            for &(k, a) in g {
                gcols[k].push((i, a));
            }
        }
        for (k, mut col) in gcols.into_iter().enumerate() {
            col.push((m + k, 1.0));
            d.add_constraint(col, Relation::Le, 0.0);
        }
        d
    }

    /// Explicit dual route for the operating subproblem. Falls back to the
    /// normalized ray problem when the dual is unbounded.
    pub fn solve_dsp_explicit(&self, ybar: &[f64]) -> Result<DspOutcome> {
        let d = self.explicit_dual(ybar, false);
        let sol = solve_lp(&d)?;
        let m = self.lp.constraints.len();
        match sol.status {
            LpStatus::Optimal => {
                let duals = sol.x[..m].to_vec();
                let pi = self.pi_of(&duals);
                // Primal values are the shadow prices of the dual rows.
                let sub_x: Vec<f64> = sol.duals[..self.lp.num_vars()].to_vec();
                Ok(DspOutcome::Optimal(DspSolution {
                    objective: sol.objective,
                    x: self.full_x(ybar, &sub_x),
                    duals,
                    pi,
                }))
            }
            LpStatus::Unbounded => match self.solve_mdsp(ybar)? {
                Some(ray) => Ok(DspOutcome::Infeasible(ray)),
                None => Err(Error::Internal("dual unbounded but no separating ray found".into())),
            },
            LpStatus::Infeasible => Err(Error::Internal("operating dual is infeasible".into())),
        }
    }

    /// Normalized ray problem: the homogeneous dual with balance duals capped
    /// at one. Returns a separating direction when `ybar` is infeasible.
    pub fn solve_mdsp(&self, ybar: &[f64]) -> Result<Option<FeasibilityRay>> {
        let d = self.explicit_dual(ybar, true);
        let sol = solve_lp(&d)?;
        let m = self.lp.constraints.len();
        let y = match sol.status {
            LpStatus::Optimal if sol.objective > CERT_TOL => sol.x[..m].to_vec(),
            LpStatus::Optimal => return Ok(None),
            LpStatus::Unbounded => {
                let ray = sol.ray.ok_or_else(|| Error::Internal("unbounded LP without ray".into()))?;
                ray[..m].to_vec()
            }
            LpStatus::Infeasible => return Err(Error::Internal("normalized ray problem is infeasible".into())),
        };
        let ray = self.ray_from(y);
        let violation = ray.constant + ray.pi.iter().zip(ybar).map(|(p, y)| p * y).sum::<f64>();
        Ok((violation > 0.0).then_some(ray))
    }

    pub fn solve(&self, ybar: &[f64], route: DspRoute) -> Result<DspOutcome> {
        match route {
            DspRoute::Primal => self.solve_dsp(ybar),
            DspRoute::ExplicitDual => self.solve_dsp_explicit(ybar),
        }
    }

    pub fn investment(&self, ybar: &[f64]) -> f64 {
        self.i_l.iter().zip(ybar).map(|(c, y)| c * y).sum()
    }

    /// Candidate lines built by the end of the horizon under `ybar`.
    pub fn built_lines(&self, ybar: &[f64]) -> BTreeSet<u32> {
        self.y_cols
            .iter()
            .zip(ybar)
            .filter(|(_, &y)| y > 0.5)
            .filter_map(|(&j, _)| match self.model.vars[j].key {
                VarKey::Y { line, .. } | VarKey::Yd { line, .. } => Some(line),
                _ => None,
            })
            .collect()
    }

    /// Load shed summed over stages, buses and representative hours.
    pub fn total_shed(&self, x: &[f64]) -> f64 {
        self.model
            .vars
            .iter()
            .zip(x)
            .filter(|(v, _)| matches!(v.key, VarKey::Ls { .. }))
            .map(|(_, x)| x)
            .sum()
    }
}

/// Master problem over the binaries and the epigraph variable.
#[derive(Debug, Clone)]
pub struct MasterProblem {
    lp: LpProblem,
    n: usize,
    i_l: Vec<f64>,
    cuts: Vec<Cut>,
}

impl MasterProblem {
    pub fn new(sub: &Subproblem) -> Self {
        let n = sub.num_binaries();
        let mut lp = LpProblem::new(Sense::Minimize, 0);
        for _ in 0..n {
            lp.add_var(0.0, 0.0, 1.0);
        }
        lp.add_var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        for (coeffs, rhs) in &sub.master_rows {
            lp.add_constraint(coeffs.clone(), Relation::Ge, *rhs);
        }
        // Operating costs are non-negative, so Z covers investment alone.
        let mut base: Vec<(usize, f64)> = sub.i_l.iter().enumerate().map(|(k, &c)| (k, -c)).collect();
        base.push((n, 1.0));
        lp.add_constraint(base, Relation::Ge, 0.0);
        Self {
            lp,
            n,
            i_l: sub.i_l.clone(),
            cuts: Vec::new(),
        }
    }

    pub fn add_cut(&mut self, cut: &Cut) {
        self.cuts.push(cut.clone());
        match cut.kind {
            CutKind::Optimality => {
                let mut coeffs: Vec<(usize, f64)> = (0..self.n)
                    .map(|k| (k, -(self.i_l[k] + cut.coeffs[k])))
                    .filter(|&(_, a)| a != 0.0)
                    .collect();
                coeffs.push((self.n, 1.0));
                self.lp.add_constraint(coeffs, Relation::Ge, cut.constant);
            }
            CutKind::Feasibility => {
                let coeffs: Vec<(usize, f64)> = (0..self.n)
                    .map(|k| (k, -cut.coeffs[k]))
                    .filter(|&(_, a)| a != 0.0)
                    .collect();
                self.lp.add_constraint(coeffs, Relation::Ge, cut.constant);
            }
        }
    }

    /// Returns `(ybar, lower bound)`, or `None` when the cuts exclude every
    /// assignment.
    pub fn solve(&self) -> Result<Option<(Vec<f64>, f64)>> {
        let binaries: Vec<usize> = (0..self.n).collect();
        let sol = solve_mip(&self.lp, &binaries)?;
        match sol.status {
            MipStatus::Optimal => Ok(Some((sol.x[..self.n].to_vec(), sol.objective))),
            MipStatus::Infeasible => Ok(None),
            MipStatus::Unbounded => Err(Error::Internal("master problem is unbounded".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub lb: f64,
    pub ub: f64,
    pub gap: f64,
    pub n_opt_cuts: usize,
    pub n_feas_cuts: usize,
    /// Scenario that set this iteration's upper bound.
    pub worst_scenario: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Converged,
    IterationLimit,
}

/// Outcome of a planning run. Costs are in k$.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub status: PlanStatus,
    pub ybar: Vec<f64>,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub iterations: Vec<IterationRecord>,
    /// Scenario 0 is the intact system, followed by contingencies.
    pub scenarios: Vec<FailureScenario>,
    /// Operating point of each scenario at the incumbent plan.
    pub solutions: Vec<DspSolution>,
    pub worst_scenario: usize,
    pub costs: CostBreakdown,
    /// Every failure configuration evaluated for risk, last evaluation first
    /// by insertion order.
    pub contingencies: Vec<ResilienceContingency>,
    pub speeds: Vec<HurricaneSpeedScenario>,
    pub subproblems: Vec<Subproblem>,
    /// Every cut added to the master, in order.
    pub cuts: Vec<Cut>,
}

impl PlanOutcome {
    pub fn total_cost(&self) -> f64 {
        self.upper_bound
    }

    pub fn gap(&self) -> f64 {
        relative_gap(self.lower_bound, self.upper_bound)
    }

    /// Model and operating point of the scenario that sets the plan cost.
    pub fn worst(&self) -> (&MilpModel, &[f64]) {
        (&self.subproblems[self.worst_scenario].model, &self.solutions[self.worst_scenario].x)
    }
}

pub fn relative_gap(lb: f64, ub: f64) -> f64 {
    if !ub.is_finite() {
        return f64::INFINITY;
    }
    let diff = (ub - lb).max(0.0);
    if ub.abs() > 1e-9 {
        diff / ub.abs()
    } else {
        diff
    }
}

fn thread_count(opts: &BendersOptions) -> Option<usize> {
    opts.threads.or_else(|| {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .filter(|&n: &usize| n > 0)
    })
}

fn solve_all(subs: &[Subproblem], ybar: &[f64], route: DspRoute) -> Vec<Result<DspOutcome>> {
    subs.par_iter().map(|s| s.solve(ybar, route)).collect()
}

struct RiskState {
    cfg: HurricaneConfig,
    speeds: Vec<HurricaneSpeedScenario>,
    rdsp: BTreeMap<Vec<u32>, Subproblem>,
    last_built: Option<BTreeSet<u32>>,
    retry: bool,
}

struct Engine<'a> {
    system: &'a PowerSystem,
    reps: &'a RepresentativeSet,
    opts: BendersOptions,
    subs: Vec<Subproblem>,
    risk: Option<RiskState>,
    contingencies: Vec<ResilienceContingency>,
}

impl Engine<'_> {
    fn scenario_model(&self, scenario: &FailureScenario, shed: ShedMode) -> Result<Subproblem> {
        let model = build_model(self.system, self.reps, scenario, shed)?;
        Subproblem::new(model, scenario.clone())
    }

    /// Re-evaluates the risk of every probable failure configuration for the
    /// current plan and adds the selected ones. Returns whether the scenario
    /// set grew.
    fn refresh_contingencies(&mut self, ybar: &[f64]) -> Result<bool> {
        let Some(risk) = self.risk.as_mut() else { return Ok(false) };
        let built: BTreeSet<u32> = self.subs[0]
            .built_lines(ybar)
            .into_iter()
            .filter(|&l| self.system.line(l).is_some_and(|l| l.in_hurricane_zone))
            .collect();
        if risk.last_built.as_ref() == Some(&built) && !risk.retry {
            return Ok(false);
        }
        let candidates = risk.cfg.probable_failures(self.system, &built, &risk.speeds)?;
        let candidates: Vec<FailureScenario> = candidates.into_iter().filter(|f| !f.is_intact()).collect();
        for f in &candidates {
            if !risk.rdsp.contains_key(&f.failed) {
                let model = build_model(self.system, self.reps, f, ShedMode::Resilience)?;
                risk.rdsp.insert(f.failed.clone(), Subproblem::new(model, f.clone())?);
            }
        }
        let outcomes: Vec<Result<DspOutcome>> = candidates
            .par_iter()
            .map(|f| risk.rdsp[&f.failed].solve_dsp(ybar))
            .collect();
        let mut evaluated = Vec::new();
        let mut any_infeasible = false;
        for (f, out) in candidates.iter().zip(outcomes) {
            match out? {
                DspOutcome::Optimal(sol) => {
                    let shed = risk.rdsp[&f.failed].total_shed(&sol.x);
                    let hp = risk.speeds[f.speed_index].probability;
                    let rri = resilience_risk_index(hp, f.probability, shed.max(0.0))?;
                    evaluated.push((f.clone(), shed.max(0.0), rri));
                }
                DspOutcome::Infeasible(_) => {
                    log::debug!("risk evaluation of failure {:?} is infeasible for the current plan", f.failed);
                    any_infeasible = true;
                }
            }
        }
        risk.retry = any_infeasible;
        risk.last_built = Some(built);
        let rri: Vec<f64> = evaluated.iter().map(|e| e.2).collect();
        let norm = normalize_risk(&rri, risk.cfg.rri_threshold);
        let mut added = Vec::new();
        for ((f, shed, rri), (n, selected)) in evaluated.into_iter().zip(norm) {
            let speed = risk.speeds[f.speed_index];
            self.contingencies.push(ResilienceContingency {
                speed: speed.speed,
                hurricane_probability: speed.probability,
                scenario: f.clone(),
                total_shed: shed,
                rri,
                normalized_rri: n,
                selected,
            });
            let known = self.subs.iter().any(|s| s.scenario.failed == f.failed)
                || added.iter().any(|a: &FailureScenario| a.failed == f.failed);
            if selected && !known {
                added.push(f);
            }
        }
        let grew = !added.is_empty();
        for f in added {
            log::info!("adding contingency with failed lines {:?}", f.failed);
            let sub = self.scenario_model(&f, ShedMode::Standard)?;
            self.subs.push(sub);
        }
        Ok(grew)
    }

    fn run(mut self) -> Result<PlanOutcome> {
        let mut master = MasterProblem::new(&self.subs[0]);
        let mut lb = f64::NEG_INFINITY;
        let mut best: Option<(f64, Vec<f64>, Vec<DspSolution>, usize)> = None;
        let mut records = Vec::new();
        let (mut n_opt, mut n_feas) = (0usize, 0usize);
        let mut status = PlanStatus::IterationLimit;

        for iter in 1..=self.opts.max_iterations {
            let Some((mut ybar, master_obj)) = master.solve()? else {
                return Err(Error::Infeasible(
                    "no investment plan admits feasible operation in every scenario".into(),
                ));
            };
            lb = lb.max(master_obj);
            if iter == 1 {
                // Start from the no-build plan.
                ybar.iter_mut().for_each(|y| *y = 0.0);
            }

            if self.refresh_contingencies(&ybar)? {
                best = None;
            }

            let outcomes = solve_all(&self.subs, &ybar, self.opts.route);
            let mut infeasible = false;
            let mut solutions = Vec::with_capacity(outcomes.len());
            for (k, out) in outcomes.into_iter().enumerate() {
                match out? {
                    DspOutcome::Optimal(sol) => solutions.push(sol),
                    DspOutcome::Infeasible(ray) => {
                        infeasible = true;
                        master.add_cut(&Cut::feasibility(k, &ray));
                        n_feas += 1;
                    }
                }
            }
            let mut worst = None;
            if !infeasible {
                let (wk, wsol) = solutions
                    .iter()
                    .enumerate()
                    .fold((0, &solutions[0]), |acc, (k, s)| if s.objective > acc.1.objective + 1e-9 * acc.1.objective.abs().max(1.0) { (k, s) } else { acc });
                let ub = self.subs[0].investment(&ybar) + wsol.objective;
                worst = Some(wk);
                for (k, sol) in solutions.iter().enumerate() {
                    if self.opts.multi_cut || k == wk {
                        master.add_cut(&Cut::optimality(k, sol, &ybar));
                        n_opt += 1;
                    }
                }
                if best.as_ref().is_none_or(|b| ub < b.0) {
                    best = Some((ub, ybar.clone(), solutions, wk));
                }
            }
            let ub = best.as_ref().map_or(f64::INFINITY, |b| b.0);
            let gap = relative_gap(lb, ub);
            log::info!("iteration {iter}: LB {lb:.6} UB {ub:.6} gap {gap:.3e}");
            records.push(IterationRecord {
                iter,
                lb,
                ub,
                gap,
                n_opt_cuts: n_opt,
                n_feas_cuts: n_feas,
                worst_scenario: worst,
            });
            if gap <= self.opts.eps {
                status = PlanStatus::Converged;
                break;
            }
        }

        let Some((ub, ybar, solutions, worst)) = best else {
            return Err(Error::Infeasible(format!(
                "no feasible plan found within {} iterations",
                self.opts.max_iterations
            )));
        };
        let costs = self.subs[worst].model.cost_breakdown(&solutions[worst].x);
        let speeds = self.risk.as_ref().map(|r| r.speeds.clone()).unwrap_or_default();
        Ok(PlanOutcome {
            status,
            ybar,
            lower_bound: lb.min(ub),
            upper_bound: ub,
            iterations: records,
            scenarios: self.subs.iter().map(|s| s.scenario.clone()).collect(),
            solutions,
            worst_scenario: worst,
            costs,
            contingencies: self.contingencies,
            speeds,
            subproblems: self.subs,
            cuts: master.cuts,
        })
    }
}

fn with_pool<T: Send>(opts: &BendersOptions, f: impl FnOnce() -> T + Send) -> Result<T> {
    match thread_count(opts) {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Benders over a fixed scenario set. The intact system is always
/// scenario 0; `contingencies` follow in order.
pub fn run_benders(
    system: &PowerSystem,
    reps: &RepresentativeSet,
    contingencies: &[FailureScenario],
    opts: &BendersOptions,
) -> Result<PlanOutcome> {
    with_pool(opts, || {
        let mut engine = Engine {
            system,
            reps,
            opts: opts.clone(),
            subs: Vec::new(),
            risk: None,
            contingencies: Vec::new(),
        };
        let intact = FailureScenario::intact();
        engine.subs.push(engine.scenario_model(&intact, ShedMode::Standard)?);
        for f in contingencies.iter().filter(|f| !f.is_intact()) {
            if engine.subs.iter().all(|s| s.scenario.failed != f.failed) {
                let sub = engine.scenario_model(f, ShedMode::Standard)?;
                engine.subs.push(sub);
            }
        }
        engine.run()
    })?
}

/// Full planning run. With `resilience` set, contingencies are derived
/// from the hurricane model for each visited plan and accumulate over the
/// run.
pub fn run_planning(
    system: &PowerSystem,
    reps: &RepresentativeSet,
    opts: &BendersOptions,
    resilience: Option<&ResilienceOptions>,
) -> Result<PlanOutcome> {
    with_pool(opts, || {
        let risk = match resilience {
            Some(r) => Some(RiskState {
                speeds: r.hurricane.speed_scenarios(r.seed)?,
                cfg: r.hurricane.clone(),
                rdsp: BTreeMap::new(),
                last_built: None,
                retry: false,
            }),
            None => None,
        };
        let mut engine = Engine {
            system,
            reps,
            opts: opts.clone(),
            subs: Vec::new(),
            risk,
            contingencies: Vec::new(),
        };
        let intact = FailureScenario::intact();
        engine.subs.push(engine.scenario_model(&intact, ShedMode::Standard)?);
        engine.run()
    })?
}

/// Load shed of `ybar` under a failure, with shedding allowed up to the full
/// load. `None` when the plan cannot operate even with full shedding.
pub fn evaluate_shed(
    system: &PowerSystem,
    reps: &RepresentativeSet,
    scenario: &FailureScenario,
    ybar: &[f64],
) -> Result<Option<f64>> {
    let model = build_model(system, reps, scenario, ShedMode::Resilience)?;
    let sub = Subproblem::new(model, scenario.clone())?;
    Ok(match sub.solve_dsp(ybar)? {
        DspOutcome::Optimal(sol) => Some(sub.total_shed(&sol.x)),
        DspOutcome::Infeasible(_) => None,
    })
}

/// Lines of a kind that the plan builds, with the first stage they appear.
pub fn build_schedule(sub: &Subproblem, ybar: &[f64]) -> Vec<(u32, u32, usize, LineKind)> {
    let mut first: BTreeMap<(u32, u32), (usize, LineKind)> = BTreeMap::new();
    for (&j, &y) in sub.y_cols.iter().zip(ybar) {
        if y < 0.5 {
            continue;
        }
        let (line, c, s, kind) = match sub.model.vars[j].key {
            VarKey::Y { s, line, c } => (line, c, s, LineKind::CandidateAc),
            VarKey::Yd { s, line, c } => (line, c, s, LineKind::CandidateDc),
            _ => continue,
        };
        let e = first.entry((line, c)).or_insert((s, kind));
        if s < e.0 {
            e.0 = s;
        }
    }
    first.into_iter().map(|((l, c), (s, k))| (l, c, s, k)).collect()
}
