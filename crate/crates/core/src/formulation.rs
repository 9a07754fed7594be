//! The co-planning MILP: variables, objective, constraint families,
//! failure masking and the block partition used by the decomposition.
//!
//! Costs are expressed in thousands of dollars (k$) to keep coefficients of
//! investment and operation terms within a few orders of magnitude.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ctpc::RepresentativeSet;
use crate::error::{Error, Result};
use crate::hurricane::FailureScenario;
use crate::lp::{LpProblem, Relation, Sense};
use crate::system::{capital_recovery_factor, LineKind, PowerSystem};

/// k$ per 10^6 $.
const K_PER_MILLION: f64 = 1000.0;
/// k$ per $.
const K_PER_DOLLAR: f64 = 1e-3;

/// Indices: `s`, `h`, `c`, `p`, `n` are 1-based; `v` is 1 (from-bus
/// converter) or 2 (to-bus converter); `gen` is the 1-based generator
/// position; `bus` and `line` are ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKey {
    Y { s: usize, line: u32, c: u32 },
    Yd { s: usize, line: u32, c: u32 },
    I { s: usize, gen: usize, h: usize },
    U { s: usize, bus: u32, h: usize },
    S { s: usize, bus: u32 },
    C { s: usize, bus: u32 },
    Pw { s: usize, bus: u32 },
    P { s: usize, gen: usize, h: usize },
    Ps { s: usize, gen: usize, h: usize, p: usize },
    R { s: usize, gen: usize, h: usize },
    Ls { s: usize, bus: u32, h: usize },
    Curt { s: usize, bus: u32, h: usize },
    E { s: usize, bus: u32, h: usize },
    Pd { s: usize, bus: u32, h: usize },
    Pc { s: usize, bus: u32, h: usize },
    Pe { s: usize, line: u32, h: usize },
    Pl { s: usize, line: u32, c: u32, h: usize },
    Pv { s: usize, v: u8, line: u32, h: usize },
    PvPos { s: usize, v: u8, line: u32, h: usize },
    PvNeg { s: usize, v: u8, line: u32, h: usize },
    Delta { n: usize, s: usize, v: u8, line: u32, h: usize },
    Sq { s: usize, v: u8, line: u32, h: usize },
    Theta { s: usize, bus: u32, h: usize },
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use VarKey::*;
        match *self {
            Y { s, line, c } => write!(f, "Y_s{s}_l{line}_c{c}"),
            Yd { s, line, c } => write!(f, "Yd_s{s}_l{line}_c{c}"),
            I { s, gen, h } => write!(f, "I_s{s}_g{gen}_h{h}"),
            U { s, bus, h } => write!(f, "U_s{s}_i{bus}_h{h}"),
            S { s, bus } => write!(f, "S_s{s}_i{bus}"),
            C { s, bus } => write!(f, "C_s{s}_i{bus}"),
            Pw { s, bus } => write!(f, "Pw_s{s}_i{bus}"),
            P { s, gen, h } => write!(f, "P_s{s}_g{gen}_h{h}"),
            Ps { s, gen, h, p } => write!(f, "Ps_s{s}_g{gen}_h{h}_p{p}"),
            R { s, gen, h } => write!(f, "R_s{s}_g{gen}_h{h}"),
            Ls { s, bus, h } => write!(f, "LS_s{s}_i{bus}_h{h}"),
            Curt { s, bus, h } => write!(f, "PC_s{s}_i{bus}_h{h}"),
            E { s, bus, h } => write!(f, "E_s{s}_i{bus}_h{h}"),
            Pd { s, bus, h } => write!(f, "Pd_s{s}_i{bus}_h{h}"),
            Pc { s, bus, h } => write!(f, "Pch_s{s}_i{bus}_h{h}"),
            Pe { s, line, h } => write!(f, "Pe_s{s}_l{line}_h{h}"),
            Pl { s, line, c, h } => write!(f, "Pl_s{s}_l{line}_c{c}_h{h}"),
            Pv { s, v, line, h } => write!(f, "Pv_s{s}_v{v}_l{line}_h{h}"),
            PvPos { s, v, line, h } => write!(f, "Pvp_s{s}_v{v}_l{line}_h{h}"),
            PvNeg { s, v, line, h } => write!(f, "Pvn_s{s}_v{v}_l{line}_h{h}"),
            Delta { n, s, v, line, h } => write!(f, "D_n{n}_s{s}_v{v}_l{line}_h{h}"),
            Sq { s, v, line, h } => write!(f, "Sq_s{s}_v{v}_l{line}_h{h}"),
            Theta { s, bus, h } => write!(f, "th_s{s}_i{bus}_h{h}"),
        }
    }
}

/// Variable classes of the compact form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarClass {
    /// Binary decisions handled by the master problem.
    Y,
    /// Storage capacities.
    S,
    /// Wind capacities.
    W,
    /// Non-negative operating variables.
    P,
    /// Free operating variables.
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CostComponent {
    /// HVAC lines
    Al,
    /// HVDC lines
    Dl,
    /// Storage
    Be,
    /// Wind farms
    Wf,
    /// Generation and reserve
    Gf,
    /// Load shedding and wind curtailment
    Lwc,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub al: f64,
    pub dl: f64,
    pub be: f64,
    pub wf: f64,
    pub gf: f64,
    pub lwc: f64,
}

impl CostBreakdown {
    pub fn add(&mut self, c: CostComponent, v: f64) {
        match c {
            CostComponent::Al => self.al += v,
            CostComponent::Dl => self.dl += v,
            CostComponent::Be => self.be += v,
            CostComponent::Wf => self.wf += v,
            CostComponent::Gf => self.gf += v,
            CostComponent::Lwc => self.lwc += v,
        }
    }

    pub fn investment(&self) -> f64 {
        self.al + self.dl + self.be + self.wf
    }

    pub fn operation(&self) -> f64 {
        self.gf + self.lwc
    }

    pub fn total(&self) -> f64 {
        self.investment() + self.operation()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub key: VarKey,
    pub class: VarClass,
    pub cost: f64,
    pub component: Option<CostComponent>,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    /// Nodal balance rows.
    Balance,
    /// Equality rows of the operating problem.
    Equality,
    /// Inequality rows of the operating problem.
    Inequality,
    /// Rows over master binaries only.
    Master,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowFamily {
    Balance,
    GenDecomposition,
    BesEnergy,
    ExistingFlow,
    LossSquare,
    LossBlocks,
    VscSign,
    VscCoupling,
    ReferenceAngle,
    GenLimits,
    GenSegment,
    Ramp,
    WindCap,
    Rps,
    CurtailHourly,
    CurtailAnnual,
    ShedHourly,
    ShedAnnual,
    ReserveLimit,
    ReserveHeadroom,
    ReserveRequirement,
    BesCharge,
    BesDischarge,
    BesChargeMode,
    BesDischargeMode,
    BesRatio,
    BesEnergyCap,
    BesPowerMax,
    BesEnergyMax,
    ExistingLimit,
    CandidateFlow,
    CandidateLimit,
    LossBlockCap,
    VscLimit,
    AngleLimit,
    CapacityMonotone,
    OperationalBound,
    BuildMonotone,
}

impl RowFamily {
    pub fn block(self) -> Block {
        use RowFamily::*;
        match self {
            Balance => Block::Balance,
            GenDecomposition | BesEnergy | ExistingFlow | LossSquare | LossBlocks | VscSign
            | VscCoupling | ReferenceAngle => Block::Equality,
            BuildMonotone => Block::Master,
            _ => Block::Inequality,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
    pub family: RowFamily,
    /// Line the row belongs to, for rows that a line outage can mask.
    pub line: Option<u32>,
    pub name: String,
}

impl Row {
    pub fn violation(&self, x: &[f64]) -> f64 {
        crate::lp::Constraint::new(self.coeffs.clone(), self.relation, self.rhs).violation(x)
    }
}

/// How the load-shedding limits are set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShedMode {
    /// Hourly and annual limits from the configuration.
    Standard,
    /// Shedding allowed up to the full load.
    Resilience,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub vars: Vec<Variable>,
    pub rows: Vec<Row>,
    index: HashMap<VarKey, usize>,
}

impl MilpModel {
    pub fn var(&self, key: &VarKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn binaries(&self) -> Vec<usize> {
        (0..self.vars.len()).filter(|&j| self.vars[j].integer).collect()
    }

    pub fn to_lp(&self) -> LpProblem {
        let mut lp = LpProblem::new(Sense::Minimize, 0);
        for v in &self.vars {
            lp.add_var(v.cost, v.lower, v.upper);
        }
        for r in &self.rows {
            lp.add_constraint(r.coeffs.clone(), r.relation, r.rhs);
        }
        lp
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.vars.iter().zip(x).map(|(v, x)| v.cost * x).sum()
    }

    pub fn cost_breakdown(&self, x: &[f64]) -> CostBreakdown {
        let mut out = CostBreakdown::default();
        for (v, &val) in self.vars.iter().zip(x) {
            if let Some(c) = v.component {
                out.add(c, v.cost * val);
            }
        }
        out
    }

    pub fn value(&self, x: &[f64], key: &VarKey) -> Option<f64> {
        self.var(key).map(|j| x[j])
    }

    /// Writes the model in a CPLEX-style LP text format.
    pub fn write_lp(&self, mut out: impl Write) -> std::io::Result<()> {
        let name = |j: usize| self.vars[j].key.to_string();
        let term = |first: bool, a: f64, j: usize| {
            let sign = if a < 0.0 { "-" } else if first { "" } else { "+" };
            let sep = if first && a >= 0.0 { "" } else { " " };
            format!("{sign}{sep}{} {}", a.abs(), name(j))
        };
        writeln!(out, "\\ co-planning model, costs in k$")?;
        writeln!(out, "Minimize")?;
        write!(out, " obj:")?;
        let mut first = true;
        for (j, v) in self.vars.iter().enumerate() {
            if v.cost != 0.0 {
                write!(out, " {}", term(first, v.cost, j))?;
                first = false;
            }
        }
        if first {
            write!(out, " 0")?;
        }
        writeln!(out)?;
        writeln!(out, "Subject To")?;
        for r in &self.rows {
            write!(out, " {}:", r.name)?;
            let mut first = true;
            for &(j, a) in &r.coeffs {
                write!(out, " {}", term(first, a, j))?;
                first = false;
            }
            if first {
                write!(out, " 0 {}", name(0))?;
            }
            writeln!(out, " {} {}", r.relation.symbol(), r.rhs)?;
        }
        writeln!(out, "Bounds")?;
        for v in &self.vars {
            match (v.lower, v.upper) {
                (lo, hi) if lo == f64::NEG_INFINITY && hi == f64::INFINITY => {
                    writeln!(out, " {} free", v.key)?
                }
                (lo, hi) if hi == f64::INFINITY => writeln!(out, " {} >= {lo}", v.key)?,
                (lo, hi) => writeln!(out, " {lo} <= {} <= {hi}", v.key)?,
            }
        }
        let bins: Vec<String> = self.binaries().into_iter().map(name).collect();
        if !bins.is_empty() {
            writeln!(out, "Binaries")?;
            for b in bins {
                writeln!(out, " {b}")?;
            }
        }
        writeln!(out, "End")
    }
}

struct Builder<'a> {
    sys: &'a PowerSystem,
    reps: &'a RepresentativeSet,
    shed: ShedMode,
    model: MilpModel,
}

fn ge(coeffs: Vec<(usize, f64)>, rhs: f64) -> (Vec<(usize, f64)>, Relation, f64) {
    (coeffs, Relation::Ge, rhs)
}

fn eq(coeffs: Vec<(usize, f64)>, rhs: f64) -> (Vec<(usize, f64)>, Relation, f64) {
    (coeffs, Relation::Eq, rhs)
}

impl<'a> Builder<'a> {
    fn stages(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.sys.config.stages
    }

    fn hours(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.reps.len()
    }

    fn growth(&self, s: usize) -> f64 {
        1.0 + self.sys.config.load_growth[s - 1]
    }

    fn lf(&self, h: usize) -> f64 {
        self.reps.hours[h - 1].load
    }

    fn wf(&self, h: usize) -> f64 {
        self.reps.hours[h - 1].wind
    }

    fn rho(&self, h: usize) -> f64 {
        self.reps.hours[h - 1].weight
    }

    /// Weight of hour `h` inside the annual curtailment and shedding sums.
    fn annual_weight(&self, h: usize) -> f64 {
        if self.sys.config.weighted_annual_sums {
            self.rho(h)
        } else {
            1.0
        }
    }

    fn add_var(
        &mut self,
        key: VarKey,
        class: VarClass,
        cost: f64,
        component: Option<CostComponent>,
    ) -> usize {
        let (lower, upper, integer) = match class {
            VarClass::Y => (0.0, 1.0, true),
            VarClass::Q => (f64::NEG_INFINITY, f64::INFINITY, false),
            _ => (0.0, f64::INFINITY, false),
        };
        let j = self.model.vars.len();
        self.model.vars.push(Variable {
            key,
            class,
            cost,
            component,
            lower,
            upper,
            integer,
        });
        let prev = self.model.index.insert(key, j);
        debug_assert!(prev.is_none(), "duplicate variable {key}");
        j
    }

    fn v(&self, key: VarKey) -> usize {
        self.model.index[&key]
    }

    fn row(
        &mut self,
        family: RowFamily,
        line: Option<u32>,
        name: String,
        (coeffs, relation, rhs): (Vec<(usize, f64)>, Relation, f64),
    ) {
        self.model.rows.push(Row {
            coeffs,
            relation,
            rhs,
            family,
            line,
            name,
        });
    }

    fn operational_class(&self) -> VarClass {
        if self.sys.config.operational_binaries {
            VarClass::Y
        } else {
            VarClass::P
        }
    }

    fn declare_variables(&mut self) -> Result<()> {
        let cfg = &self.sys.config;
        let crf_line = capital_recovery_factor(cfg.interest_rate, cfg.lifetimes.line)?;
        let crf_bes = capital_recovery_factor(cfg.interest_rate, cfg.lifetimes.bes)?;
        let crf_wf = capital_recovery_factor(cfg.interest_rate, cfg.lifetimes.wf)?;
        let sys = self.sys;
        let op_class = self.operational_class();

        for s in self.stages() {
            let inv = cfg.investment_discount(s);
            let op = cfg.operation_discount(s);

            for l in &sys.lines {
                let per_corridor = (l.invest_cost + l.row_cost) * l.length;
                for c in 1..=l.corridor_count {
                    match l.kind {
                        LineKind::Existing => {}
                        LineKind::CandidateAc => {
                            let sub = if c == 1 { l.substation_cost } else { 0.0 };
                            let cost = inv * crf_line * (per_corridor + sub) * K_PER_MILLION;
                            self.add_var(VarKey::Y { s, line: l.id, c }, VarClass::Y, cost, Some(CostComponent::Al));
                        }
                        LineKind::CandidateDc => {
                            let vsc = 2.0 * l.flow_max * l.vsc_cost.unwrap_or(0.0);
                            let cost = inv * crf_line * (per_corridor + vsc) * K_PER_MILLION;
                            self.add_var(VarKey::Yd { s, line: l.id, c }, VarClass::Y, cost, Some(CostComponent::Dl));
                        }
                    }
                }
            }
            for b in &sys.buses {
                if b.is_bes_candidate {
                    let base = inv * crf_bes * K_PER_DOLLAR;
                    self.add_var(VarKey::S { s, bus: b.id }, VarClass::S, base * b.bes_energy_cost, Some(CostComponent::Be));
                    self.add_var(VarKey::C { s, bus: b.id }, VarClass::S, base * b.bes_power_cost, Some(CostComponent::Be));
                }
                if b.is_wf_candidate {
                    let cost = inv * crf_wf * b.wf_invest_cost * K_PER_MILLION;
                    self.add_var(VarKey::Pw { s, bus: b.id }, VarClass::W, cost, Some(CostComponent::Wf));
                }
            }

            for h in self.hours() {
                let w = op * self.rho(h) * K_PER_DOLLAR;
                for (k, g) in sys.generators.iter().enumerate() {
                    let gen = k + 1;
                    let c1 = g.segment_costs[0];
                    self.add_var(VarKey::I { s, gen, h }, op_class, w * c1 * g.p_min, Some(CostComponent::Gf));
                    self.add_var(VarKey::P { s, gen, h }, VarClass::P, 0.0, None);
                    for (p, &cp) in g.segment_costs.iter().enumerate() {
                        self.add_var(VarKey::Ps { s, gen, h, p: p + 1 }, VarClass::P, w * cp, Some(CostComponent::Gf));
                    }
                    self.add_var(VarKey::R { s, gen, h }, VarClass::P, w * c1 * cfg.reserve_cost_xi, Some(CostComponent::Gf));
                }
                for b in &sys.buses {
                    self.add_var(VarKey::Ls { s, bus: b.id, h }, VarClass::P, w * b.shed_cost, Some(CostComponent::Lwc));
                    if b.is_wf_candidate {
                        self.add_var(VarKey::Curt { s, bus: b.id, h }, VarClass::P, w * b.curtail_cost, Some(CostComponent::Lwc));
                    }
                    if b.is_bes_candidate {
                        self.add_var(VarKey::U { s, bus: b.id, h }, op_class, 0.0, None);
                        self.add_var(VarKey::E { s, bus: b.id, h }, VarClass::P, 0.0, None);
                        self.add_var(VarKey::Pd { s, bus: b.id, h }, VarClass::P, 0.0, None);
                        self.add_var(VarKey::Pc { s, bus: b.id, h }, VarClass::P, 0.0, None);
                    }
                    self.add_var(VarKey::Theta { s, bus: b.id, h }, VarClass::Q, 0.0, None);
                }
                for l in &sys.lines {
                    match l.kind {
                        LineKind::Existing => {
                            self.add_var(VarKey::Pe { s, line: l.id, h }, VarClass::Q, 0.0, None);
                        }
                        LineKind::CandidateAc => {
                            for c in 1..=l.corridor_count {
                                self.add_var(VarKey::Pl { s, line: l.id, c, h }, VarClass::Q, 0.0, None);
                            }
                        }
                        LineKind::CandidateDc => {
                            for v in 1..=2u8 {
                                let line = l.id;
                                self.add_var(VarKey::Pv { s, v, line, h }, VarClass::Q, 0.0, None);
                                self.add_var(VarKey::PvPos { s, v, line, h }, VarClass::P, 0.0, None);
                                self.add_var(VarKey::PvNeg { s, v, line, h }, VarClass::P, 0.0, None);
                                self.add_var(VarKey::Sq { s, v, line, h }, VarClass::P, 0.0, None);
                                for n in 1..=cfg.pwl_blocks {
                                    self.add_var(VarKey::Delta { n, s, v, line, h }, VarClass::P, 0.0, None);
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn build_generator_constraints(&mut self) {
        let cfg = &self.sys.config;
        let segments = cfg.cost_segments as f64;
        let op_bounds = !cfg.operational_binaries;
        for s in self.stages() {
            for (k, g) in self.sys.generators.iter().enumerate() {
                let gen = k + 1;
                for h in self.hours() {
                    let i = self.v(VarKey::I { s, gen, h });
                    let p = self.v(VarKey::P { s, gen, h });
                    let tag = format!("s{s}_g{gen}_h{h}");
                    self.row(RowFamily::GenLimits, None, format!("pmin_{tag}"), ge(vec![(p, 1.0), (i, -g.p_min)], 0.0));
                    self.row(RowFamily::GenLimits, None, format!("pmax_{tag}"), ge(vec![(i, g.p_max), (p, -1.0)], 0.0));
                    let mut dec = vec![(p, 1.0), (i, -g.p_min)];
                    for q in 1..=cfg.cost_segments {
                        let ps = self.v(VarKey::Ps { s, gen, h, p: q });
                        dec.push((ps, -1.0));
                        let cap = (g.p_max - g.p_min) / segments;
                        self.row(RowFamily::GenSegment, None, format!("seg_{tag}_p{q}"), ge(vec![(i, cap), (ps, -1.0)], 0.0));
                    }
                    self.row(RowFamily::GenDecomposition, None, format!("dec_{tag}"), eq(dec, 0.0));
                    if op_bounds {
                        self.row(RowFamily::OperationalBound, None, format!("ib_{tag}"), ge(vec![(i, -1.0)], -1.0));
                    }
                    if h >= 2 {
                        let prev = self.v(VarKey::P { s, gen, h: h - 1 });
                        self.row(RowFamily::Ramp, None, format!("ru_{tag}"), ge(vec![(p, -1.0), (prev, 1.0)], -g.ramp_up));
                        self.row(RowFamily::Ramp, None, format!("rd_{tag}"), ge(vec![(prev, -1.0), (p, 1.0)], -g.ramp_down));
                    }
                }
            }
        }
    }

    fn build_rps_constraints(&mut self) {
        let cfg = &self.sys.config;
        let wf_buses: Vec<(u32, f64)> = self
            .sys
            .buses
            .iter()
            .filter(|b| b.is_wf_candidate)
            .map(|b| (b.id, b.wf_capacity_max))
            .collect();
        let peak = self.sys.total_peak_load();
        let cap_total: f64 = wf_buses.iter().map(|b| b.1).sum();
        let n_stages = cfg.stages as f64;
        for s in self.stages() {
            let mut sum = Vec::new();
            for &(bus, max) in &wf_buses {
                let pw = self.v(VarKey::Pw { s, bus });
                self.row(RowFamily::WindCap, None, format!("pwmax_s{s}_i{bus}"), ge(vec![(pw, -1.0)], -max));
                if s >= 2 {
                    let prev = self.v(VarKey::Pw { s: s - 1, bus });
                    self.row(RowFamily::CapacityMonotone, None, format!("pwmono_s{s}_i{bus}"), ge(vec![(pw, 1.0), (prev, -1.0)], 0.0));
                }
                sum.push((pw, 1.0));
            }
            let rhs = cfg.rps_alpha * (s as f64 / n_stages) * self.growth(s) * peak;
            if rhs > 0.0 {
                if rhs > cap_total + 1e-9 {
                    log::warn!("renewable target {rhs:.3} MW at stage {s} exceeds the total wind capacity {cap_total:.3} MW");
                }
                self.row(RowFamily::Rps, None, format!("rps_s{s}"), ge(sum, rhs));
            }
        }
    }

    fn shed_limits(&self) -> (f64, f64) {
        match self.shed {
            ShedMode::Standard => (self.sys.config.hourly_shed_gamma, self.sys.config.annual_shed_phi),
            ShedMode::Resilience => (1.0, 1.0),
        }
    }

    fn build_shed_curtail_constraints(&mut self) {
        let cfg = &self.sys.config;
        let (gamma, phi) = self.shed_limits();
        for s in self.stages() {
            let growth = self.growth(s);
            let mut curt_sum = Vec::new();
            let mut shed_sum = Vec::new();
            let mut expected_load = 0.0;
            for b in &self.sys.buses {
                let bus = b.id;
                for h in self.hours() {
                    let aw = self.annual_weight(h);
                    if b.is_wf_candidate {
                        let pc = self.v(VarKey::Curt { s, bus, h });
                        let pw = self.v(VarKey::Pw { s, bus });
                        self.row(RowFamily::CurtailHourly, None, format!("curt_s{s}_i{bus}_h{h}"), ge(vec![(pw, self.wf(h)), (pc, -1.0)], 0.0));
                        curt_sum.push((pc, -aw));
                        curt_sum.push((pw, cfg.wind_curtail_beta * aw * self.wf(h)));
                    }
                    let ls = self.v(VarKey::Ls { s, bus, h });
                    let hourly = growth * self.lf(h) * b.peak_load;
                    self.row(RowFamily::ShedHourly, None, format!("shed_s{s}_i{bus}_h{h}"), ge(vec![(ls, -1.0)], -gamma * hourly));
                    shed_sum.push((ls, -aw));
                    expected_load += aw * hourly;
                }
            }
            if !curt_sum.is_empty() {
                self.row(RowFamily::CurtailAnnual, None, format!("curtann_s{s}"), ge(merge(curt_sum), 0.0));
            }
            self.row(RowFamily::ShedAnnual, None, format!("shedann_s{s}"), ge(shed_sum, -phi * expected_load));
        }
    }

    fn build_reserve_constraints(&mut self) {
        let cfg = &self.sys.config;
        let peak = self.sys.total_peak_load();
        for s in self.stages() {
            for h in self.hours() {
                let mut req = Vec::new();
                for (k, g) in self.sys.generators.iter().enumerate() {
                    let gen = k + 1;
                    let r = self.v(VarKey::R { s, gen, h });
                    let p = self.v(VarKey::P { s, gen, h });
                    let tag = format!("s{s}_g{gen}_h{h}");
                    self.row(RowFamily::ReserveLimit, None, format!("rlim_{tag}"), ge(vec![(p, 1.0), (r, -1.0)], 0.0));
                    self.row(RowFamily::ReserveHeadroom, None, format!("rhead_{tag}"), ge(vec![(r, -1.0), (p, -1.0)], -g.p_max));
                    req.push((r, 1.0));
                }
                for b in self.sys.buses.iter().filter(|b| b.is_wf_candidate) {
                    let pw = self.v(VarKey::Pw { s, bus: b.id });
                    req.push((pw, -cfg.reserve_wind_share * self.wf(h)));
                }
                let rhs = cfg.reserve_load_share * self.growth(s) * self.lf(h) * peak;
                self.row(RowFamily::ReserveRequirement, None, format!("rreq_s{s}_h{h}"), ge(req, rhs));
            }
        }
    }

    fn build_bes_constraints(&mut self) {
        let cfg = &self.sys.config;
        let (eta_c, eta_d) = (cfg.bes_charge_eff, cfg.bes_discharge_eff);
        let h_last = self.reps.len();
        let op_bounds = !cfg.operational_binaries;
        for b in self.sys.buses.iter().filter(|b| b.is_bes_candidate) {
            let bus = b.id;
            for s in self.stages() {
                let sv = self.v(VarKey::S { s, bus });
                let cv = self.v(VarKey::C { s, bus });
                let tag = format!("s{s}_i{bus}");
                self.row(RowFamily::BesRatio, None, format!("epr_{tag}"), ge(vec![(sv, 1.0), (cv, -cfg.bes_epr)], 0.0));
                self.row(RowFamily::BesPowerMax, None, format!("cmax_{tag}"), ge(vec![(cv, -1.0)], -b.bes_power_max));
                self.row(RowFamily::BesEnergyMax, None, format!("smax_{tag}"), ge(vec![(sv, -1.0)], -b.bes_energy_max));
                if s >= 2 {
                    let sp = self.v(VarKey::S { s: s - 1, bus });
                    let cp = self.v(VarKey::C { s: s - 1, bus });
                    self.row(RowFamily::CapacityMonotone, None, format!("smono_{tag}"), ge(vec![(sv, 1.0), (sp, -1.0)], 0.0));
                    self.row(RowFamily::CapacityMonotone, None, format!("cmono_{tag}"), ge(vec![(cv, 1.0), (cp, -1.0)], 0.0));
                }
                for h in self.hours() {
                    let u = self.v(VarKey::U { s, bus, h });
                    let e = self.v(VarKey::E { s, bus, h });
                    let pd = self.v(VarKey::Pd { s, bus, h });
                    let pc = self.v(VarKey::Pc { s, bus, h });
                    let tag = format!("s{s}_i{bus}_h{h}");
                    self.row(RowFamily::BesCharge, None, format!("chg_{tag}"), ge(vec![(cv, 1.0), (pc, -eta_c)], 0.0));
                    self.row(RowFamily::BesDischarge, None, format!("dis_{tag}"), ge(vec![(cv, 1.0), (pd, -1.0 / eta_d)], 0.0));
                    self.row(RowFamily::BesChargeMode, None, format!("chgm_{tag}"), ge(vec![(u, b.bes_power_max), (pc, -eta_c)], 0.0));
                    self.row(RowFamily::BesDischargeMode, None, format!("dism_{tag}"), ge(vec![(u, -b.bes_power_max), (pd, -1.0 / eta_d)], -b.bes_power_max));
                    if op_bounds {
                        self.row(RowFamily::OperationalBound, None, format!("ub_{tag}"), ge(vec![(u, -1.0)], -1.0));
                    }
                    let mut rec = vec![(e, 1.0), (pc, -eta_c), (pd, 1.0 / eta_d)];
                    if h >= 2 {
                        rec.push((self.v(VarKey::E { s, bus, h: h - 1 }), -1.0));
                    } else if s >= 2 {
                        rec.push((self.v(VarKey::E { s: s - 1, bus, h: h_last }), -1.0));
                    }
                    self.row(RowFamily::BesEnergy, None, format!("soc_{tag}"), eq(rec, 0.0));
                    self.row(RowFamily::BesEnergyCap, None, format!("ecap_{tag}"), ge(vec![(sv, 1.0), (e, -1.0)], 0.0));
                }
            }
        }
    }

    fn build_network_constraints(&mut self) {
        let cfg = &self.sys.config;
        let psi = cfg.base_power;
        let reference = cfg.reference_bus;
        for s in self.stages() {
            for h in self.hours() {
                for b in &self.sys.buses {
                    let th = self.v(VarKey::Theta { s, bus: b.id, h });
                    let tag = format!("s{s}_i{}_h{h}", b.id);
                    self.row(RowFamily::AngleLimit, None, format!("thmax_{tag}"), ge(vec![(th, -1.0)], -cfg.angle_bound));
                    self.row(RowFamily::AngleLimit, None, format!("thmin_{tag}"), ge(vec![(th, 1.0)], -cfg.angle_bound));
                }
                let th_ref = self.v(VarKey::Theta { s, bus: reference, h });
                self.row(RowFamily::ReferenceAngle, None, format!("ref_s{s}_h{h}"), eq(vec![(th_ref, 1.0)], 0.0));

                for l in &self.sys.lines {
                    let tf = self.v(VarKey::Theta { s, bus: l.from_bus, h });
                    let tt = self.v(VarKey::Theta { s, bus: l.to_bus, h });
                    let bl = psi * l.susceptance_pu.unwrap_or(0.0);
                    match l.kind {
                        LineKind::Existing => {
                            let pe = self.v(VarKey::Pe { s, line: l.id, h });
                            let tag = format!("s{s}_l{}_h{h}", l.id);
                            self.row(RowFamily::ExistingFlow, Some(l.id), format!("flow_{tag}"), eq(vec![(pe, 1.0), (tf, -bl), (tt, bl)], 0.0));
                            self.row(RowFamily::ExistingLimit, Some(l.id), format!("femax_{tag}"), ge(vec![(pe, -1.0)], -l.flow_max));
                            self.row(RowFamily::ExistingLimit, Some(l.id), format!("femin_{tag}"), ge(vec![(pe, 1.0)], -l.flow_max));
                        }
                        LineKind::CandidateAc => {
                            let m = self.sys.big_m(l);
                            for c in 1..=l.corridor_count {
                                let y = self.v(VarKey::Y { s, line: l.id, c });
                                let pl = self.v(VarKey::Pl { s, line: l.id, c, h });
                                let tag = format!("s{s}_l{}_c{c}_h{h}", l.id);
                                self.row(RowFamily::CandidateFlow, Some(l.id), format!("dju_{tag}"), ge(vec![(pl, -1.0), (tf, bl), (tt, -bl), (y, -m)], -m));
                                self.row(RowFamily::CandidateFlow, Some(l.id), format!("djl_{tag}"), ge(vec![(pl, 1.0), (tf, -bl), (tt, bl), (y, -m)], -m));
                                self.row(RowFamily::CandidateLimit, Some(l.id), format!("flmax_{tag}"), ge(vec![(y, l.flow_max), (pl, -1.0)], 0.0));
                                self.row(RowFamily::CandidateLimit, Some(l.id), format!("flmin_{tag}"), ge(vec![(y, l.flow_max), (pl, 1.0)], 0.0));
                            }
                        }
                        LineKind::CandidateDc => {}
                    }
                }
            }
        }
    }

    fn build_hvdc_constraints(&mut self) {
        let cfg = &self.sys.config;
        let n_blocks = cfg.pwl_blocks;
        let loss = cfg.vsc_loss_coeffs;
        for l in self.sys.lines.iter().filter(|l| l.kind == LineKind::CandidateDc) {
            let line = l.id;
            let width = l.flow_max / n_blocks as f64;
            for s in self.stages() {
                let yd: Vec<usize> = (1..=l.corridor_count)
                    .map(|c| self.v(VarKey::Yd { s, line, c }))
                    .collect();
                for h in self.hours() {
                    let mut coupling = Vec::new();
                    for v in 1..=2u8 {
                        let pv = self.v(VarKey::Pv { s, v, line, h });
                        let pp = self.v(VarKey::PvPos { s, v, line, h });
                        let pn = self.v(VarKey::PvNeg { s, v, line, h });
                        let sq = self.v(VarKey::Sq { s, v, line, h });
                        let tag = format!("s{s}_v{v}_l{line}_h{h}");
                        let mut square = vec![(sq, 1.0)];
                        let mut blocks = Vec::new();
                        for n in 1..=n_blocks {
                            let d = self.v(VarKey::Delta { n, s, v, line, h });
                            square.push((d, -pwl_slope(n, l.flow_max, n_blocks)));
                            blocks.push((d, 1.0));
                            self.row(RowFamily::LossBlockCap, Some(line), format!("blk_{tag}_n{n}"), ge(vec![(d, -1.0)], -width));
                        }
                        blocks.push((pp, -1.0));
                        blocks.push((pn, -1.0));
                        self.row(RowFamily::LossSquare, Some(line), format!("sq_{tag}"), eq(square, 0.0));
                        self.row(RowFamily::LossBlocks, Some(line), format!("abs_{tag}"), eq(blocks, 0.0));
                        self.row(RowFamily::VscSign, Some(line), format!("sgn_{tag}"), eq(vec![(pv, 1.0), (pp, -1.0), (pn, 1.0)], 0.0));
                        let mut upper = vec![(pv, -1.0)];
                        let mut lower = vec![(pv, 1.0)];
                        for &y in &yd {
                            upper.push((y, l.flow_max));
                            lower.push((y, l.flow_max));
                        }
                        self.row(RowFamily::VscLimit, Some(line), format!("pvmax_{tag}"), ge(upper, 0.0));
                        self.row(RowFamily::VscLimit, Some(line), format!("pvmin_{tag}"), ge(lower, 0.0));
                        coupling.push((pv, 1.0 - loss.psi));
                        coupling.push((sq, -loss.chi));
                    }
                    for &y in &yd {
                        coupling.push((y, -2.0 * loss.phi));
                    }
                    self.row(RowFamily::VscCoupling, Some(line), format!("cpl_s{s}_l{line}_h{h}"), eq(coupling, 0.0));
                }
            }
        }
    }

    fn build_power_balance(&mut self) {
        for s in self.stages() {
            let growth = self.growth(s);
            for h in self.hours() {
                let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.sys.buses.len()];
                let bi = |id: u32| self.sys.bus_index(id).unwrap();
                for (k, g) in self.sys.generators.iter().enumerate() {
                    rows[bi(g.bus)].push((self.v(VarKey::P { s, gen: k + 1, h }), 1.0));
                }
                for b in &self.sys.buses {
                    let r = &mut rows[bi(b.id)];
                    let bus = b.id;
                    if b.is_wf_candidate {
                        r.push((self.model.index[&VarKey::Pw { s, bus }], self.reps.hours[h - 1].wind));
                        r.push((self.model.index[&VarKey::Curt { s, bus, h }], -1.0));
                    }
                    if b.is_bes_candidate {
                        r.push((self.model.index[&VarKey::Pd { s, bus, h }], 1.0));
                        r.push((self.model.index[&VarKey::Pc { s, bus, h }], -1.0));
                    }
                    r.push((self.model.index[&VarKey::Ls { s, bus, h }], 1.0));
                }
                for l in &self.sys.lines {
                    let (f, t) = (bi(l.from_bus), bi(l.to_bus));
                    match l.kind {
                        LineKind::Existing => {
                            let pe = self.v(VarKey::Pe { s, line: l.id, h });
                            rows[f].push((pe, -1.0));
                            rows[t].push((pe, 1.0));
                        }
                        LineKind::CandidateAc => {
                            for c in 1..=l.corridor_count {
                                let pl = self.v(VarKey::Pl { s, line: l.id, c, h });
                                rows[f].push((pl, -1.0));
                                rows[t].push((pl, 1.0));
                            }
                        }
                        LineKind::CandidateDc => {
                            rows[f].push((self.v(VarKey::Pv { s, v: 1, line: l.id, h }), -1.0));
                            rows[t].push((self.v(VarKey::Pv { s, v: 2, line: l.id, h }), -1.0));
                        }
                    }
                }
                for (k, coeffs) in rows.into_iter().enumerate() {
                    let b = &self.sys.buses[k];
                    let demand = growth * self.lf(h) * b.peak_load;
                    self.row(RowFamily::Balance, None, format!("bal_s{s}_i{}_h{h}", b.id), eq(coeffs, demand));
                }
            }
        }
    }

    fn build_master_rows(&mut self) {
        for s in 2..=self.sys.config.stages {
            for l in self.sys.lines.iter().filter(|l| l.kind.is_candidate()) {
                for c in 1..=l.corridor_count {
                    let (now, before) = match l.kind {
                        LineKind::CandidateAc => (VarKey::Y { s, line: l.id, c }, VarKey::Y { s: s - 1, line: l.id, c }),
                        _ => (VarKey::Yd { s, line: l.id, c }, VarKey::Yd { s: s - 1, line: l.id, c }),
                    };
                    let (a, b) = (self.v(now), self.v(before));
                    self.row(RowFamily::BuildMonotone, Some(l.id), format!("build_s{s}_l{}_c{c}", l.id), ge(vec![(a, 1.0), (b, -1.0)], 0.0));
                }
            }
        }
    }
}

/// Sums duplicate column entries.
fn merge(mut coeffs: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    coeffs.sort_by_key(|c| c.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
    for (j, a) in coeffs {
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += a,
            _ => out.push((j, a)),
        }
    }
    out
}

/// Slope of block `n` in the piecewise-linear square of converter power.
pub fn pwl_slope(n: usize, p_max: f64, blocks: usize) -> f64 {
    (2 * n - 1) as f64 * p_max / blocks as f64
}

/// Piecewise-linear square of `|p|` with blocks filled in order.
pub fn pwl_square(p: f64, p_max: f64, blocks: usize) -> f64 {
    let width = p_max / blocks as f64;
    let mut rest = p.abs().min(p_max);
    let mut total = 0.0;
    for n in 1..=blocks {
        let d = rest.min(width);
        total += pwl_slope(n, p_max, blocks) * d;
        rest -= d;
    }
    total
}

/// Converter loss `phi + psi |p| + chi * pwl(p^2)` in MW.
pub fn vsc_loss(p: f64, p_max: f64, blocks: usize, coeffs: &crate::system::VscLossCoeffs) -> f64 {
    coeffs.phi + coeffs.psi * p.abs() + coeffs.chi * pwl_square(p, p_max, blocks)
}

/// Builds the full model for one failure scenario.
pub fn build_model(
    system: &PowerSystem,
    reps: &RepresentativeSet,
    scenario: &FailureScenario,
    shed: ShedMode,
) -> Result<MilpModel> {
    if reps.is_empty() {
        return Err(Error::invalid("no representative hours"));
    }
    let mut b = Builder {
        sys: system,
        reps,
        shed,
        model: MilpModel {
            vars: Vec::new(),
            rows: Vec::new(),
            index: HashMap::new(),
        },
    };
    b.declare_variables()?;
    b.build_master_rows();
    b.build_generator_constraints();
    b.build_rps_constraints();
    b.build_shed_curtail_constraints();
    b.build_reserve_constraints();
    b.build_bes_constraints();
    b.build_network_constraints();
    b.build_hvdc_constraints();
    b.build_power_balance();
    let mut model = b.model;
    apply_failure_scenario(&mut model, system, scenario)?;
    Ok(model)
}

/// Takes the failed lines out of service in every stage and hour.
pub fn apply_failure_scenario(
    model: &mut MilpModel,
    system: &PowerSystem,
    scenario: &FailureScenario,
) -> Result<()> {
    for &id in &scenario.failed {
        let line = system
            .line(id)
            .ok_or_else(|| Error::DanglingReference(format!("failure scenario names line {id}")))?;
        if !line.in_hurricane_zone {
            return Err(Error::invalid(format!("line {id} is outside the hurricane zone")));
        }
    }
    if scenario.failed.is_empty() {
        return Ok(());
    }
    let failed: std::collections::BTreeSet<u32> = scenario.failed.iter().copied().collect();
    let vars = &model.vars;
    let is_build = |j: usize| matches!(vars[j].key, VarKey::Y { .. } | VarKey::Yd { .. });
    for row in &mut model.rows {
        let Some(l) = row.line else { continue };
        if !failed.contains(&l) {
            continue;
        }
        match row.family {
            RowFamily::ExistingFlow => {
                row.coeffs.retain(|&(j, _)| matches!(vars[j].key, VarKey::Pe { .. }));
            }
            RowFamily::CandidateFlow | RowFamily::CandidateLimit | RowFamily::VscLimit | RowFamily::VscCoupling => {
                row.coeffs.retain(|&(j, _)| !is_build(j));
            }
            _ => {}
        }
    }
    Ok(())
}

/// Row and column partition of a model into the decomposition blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactBlocks {
    pub balance: Vec<usize>,
    pub equality: Vec<usize>,
    pub inequality: Vec<usize>,
    pub master: Vec<usize>,
    pub y: Vec<usize>,
    pub s: Vec<usize>,
    pub w: Vec<usize>,
    pub p: Vec<usize>,
    pub q: Vec<usize>,
    pub i_l: Vec<f64>,
    pub i_s: Vec<f64>,
    pub i_w: Vec<f64>,
    pub o_c: Vec<f64>,
}

/// Sparse row-major submatrix.
pub type SparseBlock = Vec<Vec<(usize, f64)>>;

impl CompactBlocks {
    pub fn rows(&self, block: Block) -> &[usize] {
        match block {
            Block::Balance => &self.balance,
            Block::Equality => &self.equality,
            Block::Inequality => &self.inequality,
            Block::Master => &self.master,
        }
    }

    pub fn cols(&self, class: VarClass) -> &[usize] {
        match class {
            VarClass::Y => &self.y,
            VarClass::S => &self.s,
            VarClass::W => &self.w,
            VarClass::P => &self.p,
            VarClass::Q => &self.q,
        }
    }

    /// Coefficients of `class` columns in `block` rows, indexed by position
    /// within the class.
    pub fn matrix(&self, model: &MilpModel, block: Block, class: VarClass) -> SparseBlock {
        let cols = self.cols(class);
        let pos: HashMap<usize, usize> = cols.iter().enumerate().map(|(k, &j)| (j, k)).collect();
        self.rows(block)
            .iter()
            .map(|&r| {
                model.rows[r]
                    .coeffs
                    .iter()
                    .filter_map(|&(j, a)| pos.get(&j).map(|&k| (k, a)))
                    .collect()
            })
            .collect()
    }

    pub fn rhs(&self, model: &MilpModel, block: Block) -> Vec<f64> {
        self.rows(block).iter().map(|&r| model.rows[r].rhs).collect()
    }

    /// Objective rebuilt from the class cost vectors.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let part = |cols: &[usize], c: &[f64]| -> f64 { cols.iter().zip(c).map(|(&j, c)| c * x[j]).sum() };
        part(&self.y, &self.i_l) + part(&self.s, &self.i_s) + part(&self.w, &self.i_w) + part(&self.p, &self.o_c)
    }
}

pub fn partition_compact(model: &MilpModel) -> Result<CompactBlocks> {
    let mut b = CompactBlocks {
        balance: Vec::new(),
        equality: Vec::new(),
        inequality: Vec::new(),
        master: Vec::new(),
        y: Vec::new(),
        s: Vec::new(),
        w: Vec::new(),
        p: Vec::new(),
        q: Vec::new(),
        i_l: Vec::new(),
        i_s: Vec::new(),
        i_w: Vec::new(),
        o_c: Vec::new(),
    };
    for (j, v) in model.vars.iter().enumerate() {
        let ok = match v.class {
            VarClass::Y => v.integer && v.lower == 0.0 && v.upper == 1.0,
            VarClass::Q => v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY,
            _ => v.lower == 0.0 && v.upper == f64::INFINITY && !v.integer,
        };
        if !ok {
            return Err(Error::Internal(format!("variable {} has bounds inconsistent with its class", v.key)));
        }
        match v.class {
            VarClass::Y => {
                b.y.push(j);
                b.i_l.push(v.cost);
            }
            VarClass::S => {
                b.s.push(j);
                b.i_s.push(v.cost);
            }
            VarClass::W => {
                b.w.push(j);
                b.i_w.push(v.cost);
            }
            VarClass::P => {
                b.p.push(j);
                b.o_c.push(v.cost);
            }
            VarClass::Q => {
                if v.cost != 0.0 {
                    return Err(Error::Internal(format!("free variable {} carries a cost", v.key)));
                }
                b.q.push(j);
            }
        }
    }
    for (r, row) in model.rows.iter().enumerate() {
        let block = row.family.block();
        let relation_ok = match block {
            Block::Balance | Block::Equality => row.relation == Relation::Eq,
            Block::Inequality | Block::Master => row.relation == Relation::Ge,
        };
        if !relation_ok {
            return Err(Error::Internal(format!("row {} has relation {:?} outside its block", row.name, row.relation)));
        }
        if block == Block::Master
            && row.coeffs.iter().any(|&(j, _)| model.vars[j].class != VarClass::Y)
        {
            return Err(Error::Internal(format!("master row {} touches operating variables", row.name)));
        }
        match block {
            Block::Balance => b.balance.push(r),
            Block::Equality => b.equality.push(r),
            Block::Inequality => b.inequality.push(r),
            Block::Master => b.master.push(r),
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctpc::RepresentativeHour;
    use crate::lp::{solve_lp, solve_mip, LpStatus, MipStatus};
    use crate::system::{Bus, Generator, Line, Lifetimes, PlanningConfig, SystemFile, VscLossCoeffs};

    fn config(stages: usize) -> PlanningConfig {
        PlanningConfig {
            stages,
            interest_rate: 0.05,
            lifetimes: Lifetimes { line: 50, bes: 10, wf: 20 },
            rps_alpha: 0.0,
            wind_curtail_beta: 0.4,
            hourly_shed_gamma: 1.0,
            annual_shed_phi: 1.0,
            reserve_cost_xi: 0.1,
            bes_epr: 3.0,
            base_power: 100.0,
            vsc_loss_coeffs: VscLossCoeffs { phi: 0.12, psi: 0.0029, chi: 0.00031 },
            cost_segments: 2,
            pwl_blocks: 5,
            benders_eps: 1e-3,
            load_growth: vec![0.0; stages],
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

    fn bus(id: u32, load: f64) -> Bus {
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
            curtail_cost: 2000.0,
        }
    }

    fn line(id: u32, from: u32, to: u32, kind: LineKind) -> Line {
        Line {
            id,
            from_bus: from,
            to_bus: to,
            kind,
            circuits: 1,
            susceptance_pu: (kind != LineKind::CandidateDc).then_some(5.0),
            flow_max: 100.0,
            length: 10.0,
            invest_cost: 1.0,
            row_cost: 0.034,
            substation_cost: 3.358,
            vsc_cost: (kind == LineKind::CandidateDc).then_some(0.202),
            in_hurricane_zone: true,
            corridor_count: 1,
        }
    }

    fn gen(bus: u32, p_max: f64) -> Generator {
        Generator {
            bus,
            p_min: 0.0,
            p_max,
            segment_costs: vec![20.0, 30.0],
            ramp_up: p_max,
            ramp_down: p_max,
        }
    }

    fn reps(n: usize) -> RepresentativeSet {
        RepresentativeSet::from_hours(
            (0..n)
                .map(|k| RepresentativeHour { load: 0.5 + 0.1 * k as f64, wind: 0.3, weight: 8760.0 / n as f64 })
                .collect(),
            "test",
        )
    }

    fn two_bus() -> PowerSystem {
        PowerSystem::new(SystemFile {
            buses: vec![bus(1, 0.0), bus(2, 80.0)],
            lines: vec![line(1, 1, 2, LineKind::Existing)],
            generators: vec![gen(1, 150.0)],
            config: config(1),
        })
        .unwrap()
    }

    fn full_featured() -> PowerSystem {
        let mut buses = vec![bus(1, 20.0), bus(2, 80.0), bus(3, 50.0)];
        buses[1].is_bes_candidate = true;
        buses[1].bes_power_max = 50.0;
        buses[1].bes_energy_max = 200.0;
        buses[1].bes_energy_cost = 50_000.0;
        buses[1].bes_power_cost = 500_000.0;
        buses[2].is_wf_candidate = true;
        buses[2].wf_capacity_max = 100.0;
        buses[2].wf_invest_cost = 2.0;
        let mut cfg = config(2);
        cfg.load_growth = vec![0.0, 0.05];
        cfg.operational_binaries = true;
        PowerSystem::new(SystemFile {
            buses,
            lines: vec![
                line(1, 1, 2, LineKind::Existing),
                line(2, 2, 3, LineKind::CandidateAc),
                line(3, 1, 3, LineKind::CandidateDc),
            ],
            generators: vec![gen(1, 200.0), Generator { p_min: 10.0, ..gen(3, 60.0) }],
            config: cfg,
        })
        .unwrap()
    }

    #[test]
    fn every_symbol_has_a_column() {
        let m = build_model(&full_featured(), &reps(2), &FailureScenario::intact(), ShedMode::Standard).unwrap();
        let mut kinds = std::collections::HashSet::new();
        for v in &m.vars {
            kinds.insert(std::mem::discriminant(&v.key));
        }
        assert_eq!(kinds.len(), 23);
    }

    #[test]
    fn discounting_and_reserve_coefficients() {
        let sys = full_featured();
        let m = build_model(&sys, &reps(2), &FailureScenario::intact(), ShedMode::Standard).unwrap();
        let r = &m.vars[m.var(&VarKey::R { s: 1, gen: 1, h: 1 }).unwrap()];
        // xi * Cg1 = 2 $/MWh, times hour weight and operation discount, in k$.
        let expect = 2.0 * 4380.0 * (2.0 / 1.05f64.powi(2)) * 1e-3;
        assert!((r.cost - expect).abs() < 1e-12);
        let y = &m.vars[m.var(&VarKey::Y { s: 1, line: 2, c: 1 }).unwrap()];
        let crf = capital_recovery_factor(0.05, 50).unwrap();
        let expect = (2.0 / 1.05) * crf * (10.0 * 1.034 + 3.358) * 1000.0;
        assert!((y.cost - expect).abs() < 1e-9);
    }

    #[test]
    fn zero_everything_costs_nothing() {
        let mut sys = two_bus().to_file();
        sys.buses[1].peak_load = 0.0;
        let sys = PowerSystem::new(sys).unwrap();
        let m = build_model(&sys, &reps(2), &FailureScenario::intact(), ShedMode::Standard).unwrap();
        let s = solve_lp(&m.to_lp()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(s.objective.abs() < 1e-9);
    }

    #[test]
    fn segment_caps() {
        let mut file = two_bus().to_file();
        file.generators[0] = Generator { p_min: 50.0, p_max: 150.0, segment_costs: vec![10.0; 4], ..gen(1, 150.0) };
        file.config.cost_segments = 4;
        let sys = PowerSystem::new(file).unwrap();
        let m = build_model(&sys, &reps(1), &FailureScenario::intact(), ShedMode::Standard).unwrap();
        let i = m.var(&VarKey::I { s: 1, gen: 1, h: 1 }).unwrap();
        let seg: Vec<&Row> = m.rows.iter().filter(|r| r.family == RowFamily::GenSegment).collect();
        assert_eq!(seg.len(), 4);
        assert!(seg.iter().all(|r| r.coeffs.contains(&(i, 25.0))));
        assert!(m.rows.iter().all(|r| r.family != RowFamily::Ramp));
    }

    #[test]
    fn rps_ramp() {
        let mut file = full_featured().to_file();
        file.config.stages = 4;
        file.config.load_growth = vec![0.0; 4];
        file.config.rps_alpha = 0.2;
        for b in &mut file.buses {
            b.peak_load = 1000.0 / 3.0;
        }
        file.buses[2].wf_capacity_max = 500.0;
        let sys = PowerSystem::new(file).unwrap();
        let m = build_model(&sys, &reps(1), &FailureScenario::intact(), ShedMode::Standard).unwrap();
        let rhs: Vec<f64> = m.rows.iter().filter(|r| r.family == RowFamily::Rps).map(|r| r.rhs).collect();
        assert!((rhs[3] - 200.0).abs() < 1e-9);
        assert!((rhs[1] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn shed_caps_by_mode() {
        let mut file = two_bus().to_file();
        file.config.hourly_shed_gamma = 0.0;
        file.config.annual_shed_phi = 0.0;
        file.buses[1].peak_load = 100.0;
        let sys = PowerSystem::new(file).unwrap();
        let one = RepresentativeSet::from_hours(vec![RepresentativeHour { load: 0.8, wind: 0.0, weight: 8760.0 }], "x");
        let cap = |mode| {
            let m = build_model(&sys, &one, &FailureScenario::intact(), mode).unwrap();
            m.rows
                .iter()
                .find(|r| r.family == RowFamily::ShedHourly && r.name == "shed_s1_i2_h1")
                .map(|r| -r.rhs)
                .unwrap()
        };
        assert_eq!(cap(ShedMode::Standard), 0.0);
        assert!((cap(ShedMode::Resilience) - 80.0).abs() < 1e-12);
    }

    #[test]
    fn reserve_requirement_rhs() {
        let mut file = full_featured().to_file();
        file.config.stages = 1;
        file.config.load_growth = vec![0.0];
        for b in &mut file.buses {
            b.peak_load = 1000.0 / 3.0;
        }
        let sys = PowerSystem::new(file).unwrap();
        let one = RepresentativeSet::from_hours(vec![RepresentativeHour { load: 0.5, wind: 0.4, weight: 1.0 }], "x");
        let m = build_model(&sys, &one, &FailureScenario::intact(), ShedMode::Standard).unwrap();
        let row = m.rows.iter().find(|r| r.family == RowFamily::ReserveRequirement).unwrap();
        assert!((row.rhs - 15.0).abs() < 1e-9);
        let pw = m.var(&VarKey::Pw { s: 1, bus: 3 }).unwrap();
        // With Pw = 500, the wind share adds 0.05 * 0.4 * 500 = 10 MW.
        let coeff = row.coeffs.iter().find(|c| c.0 == pw).unwrap().1;
        assert!((-coeff * 500.0 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn two_bus_transfer() {
        let sys = two_bus();
        let r = reps(2);
        let m = build_model(&sys, &r, &FailureScenario::intact(), ShedMode::Standard).unwrap();
        let s = solve_mip(&m.to_lp(), &m.binaries()).unwrap();
        assert_eq!(s.status, MipStatus::Optimal);
        for h in 1..=2 {
            let pe = m.value(&s.x, &VarKey::Pe { s: 1, line: 1, h }).unwrap();
            assert!((pe - 80.0 * r.hours[h - 1].load).abs() < 1e-7);
        }
        let lp = m.to_lp();
        for row in &lp.constraints {
            assert!(row.violation(&s.x) < 1e-6);
        }
    }

    #[test]
    fn islanded_bus_sheds_everything() {
        let mut file = two_bus().to_file();
        file.buses.push(bus(3, 50.0));
        let sys = PowerSystem::new(file).unwrap();
        let one = RepresentativeSet::from_hours(vec![RepresentativeHour { load: 1.0, wind: 0.0, weight: 1.0 }], "x");
        let m = build_model(&sys, &one, &FailureScenario::intact(), ShedMode::Resilience).unwrap();
        let s = solve_lp(&m.to_lp()).unwrap();
        let ls = m.value(&s.x, &VarKey::Ls { s: 1, bus: 3, h: 1 }).unwrap();
        assert!((ls - 50.0).abs() < 1e-7);
    }

    #[test]
    fn failed_tie_forces_full_shed() {
        let mut file = two_bus().to_file();
        // Local load keeps the generator dispatchable so reserves stay feasible.
        file.buses[0].peak_load = 10.0;
        let sys = PowerSystem::new(file).unwrap();
        let one = RepresentativeSet::from_hours(vec![RepresentativeHour { load: 1.0, wind: 0.0, weight: 1.0 }], "x");
        let fail = FailureScenario { failed: vec![1], states: vec![true], probability: 1.0, speed_index: 0 };
        let m = build_model(&sys, &one, &fail, ShedMode::Resilience).unwrap();
        let s = solve_lp(&m.to_lp()).unwrap();
        let ls = m.value(&s.x, &VarKey::Ls { s: 1, bus: 2, h: 1 }).unwrap();
        assert!((ls - 80.0).abs() < 1e-7);
        let mut outside = sys.to_file();
        outside.lines[0].in_hurricane_zone = false;
        let outside = PowerSystem::new(outside).unwrap();
        assert!(build_model(&outside, &one, &fail, ShedMode::Resilience).is_err());
    }

    #[test]
    fn masking_one_of_two_parallel_candidates() {
        let mut file = two_bus().to_file();
        file.lines.push(line(2, 1, 2, LineKind::CandidateAc));
        file.lines.push(line(3, 1, 2, LineKind::CandidateAc));
        let sys = PowerSystem::new(file).unwrap();
        let one = reps(1);
        let intact = build_model(&sys, &one, &FailureScenario::intact(), ShedMode::Standard).unwrap();
        let fail = FailureScenario { failed: vec![2], states: vec![true], probability: 1.0, speed_index: 0 };
        let masked = build_model(&sys, &one, &fail, ShedMode::Standard).unwrap();
        let y2 = masked.var(&VarKey::Y { s: 1, line: 2, c: 1 }).unwrap();
        let y3 = masked.var(&VarKey::Y { s: 1, line: 3, c: 1 }).unwrap();
        for (a, b) in intact.rows.iter().zip(&masked.rows) {
            if b.line == Some(2) && matches!(b.family, RowFamily::CandidateFlow | RowFamily::CandidateLimit) {
                assert!(b.coeffs.iter().all(|c| c.0 != y2));
                assert_ne!(a, b);
            } else {
                assert_eq!(a, b);
            }
        }
        assert!(masked.rows.iter().any(|r| r.coeffs.iter().any(|c| c.0 == y3)));
        assert_eq!(
            build_model(&sys, &one, &FailureScenario::intact(), ShedMode::Standard).unwrap(),
            intact
        );
    }

    #[test]
    fn disjunction_with_built_line_is_the_flow_law() {
        let mut file = two_bus().to_file();
        file.lines.push(line(2, 1, 2, LineKind::CandidateAc));
        let sys = PowerSystem::new(file).unwrap();
        let m = build_model(&sys, &reps(1), &FailureScenario::intact(), ShedMode::Standard).unwrap();
        let rows: Vec<&Row> = m.rows.iter().filter(|r| r.family == RowFamily::CandidateFlow).collect();
        let y = m.var(&VarKey::Y { s: 1, line: 2, c: 1 }).unwrap();
        let pl = m.var(&VarKey::Pl { s: 1, line: 2, c: 1, h: 1 }).unwrap();
        let t1 = m.var(&VarKey::Theta { s: 1, bus: 1, h: 1 }).unwrap();
        let t2 = m.var(&VarKey::Theta { s: 1, bus: 2, h: 1 }).unwrap();
        let mut x = vec![0.0; m.num_vars()];
        x[y] = 1.0;
        let mut state = 12345u64;
        for _ in 0..200 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 1.2;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let b = ((state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 1.2;
            x[t1] = a;
            x[t2] = b;
            let law = 500.0 * (a - b);
            for (flow, expect_ok) in [(law, true), (law + 1.0, false), (law - 1.0, false)] {
                x[pl] = flow;
                let ok = rows.iter().all(|r| r.violation(&x) <= 1e-9);
                assert_eq!(ok, expect_ok);
            }
        }
        // Big-M rule.
        assert!((sys.big_m(sys.line(2).unwrap()) - 600.0).abs() < 1e-9);
    }

    #[test]
    fn pwl_slopes_and_tightness() {
        let slopes: Vec<f64> = (1..=5).map(|n| pwl_slope(n, 100.0, 5)).collect();
        assert_eq!(slopes, vec![20.0, 60.0, 100.0, 140.0, 180.0]);
        let chi = 0.00031;
        let bound = chi * (100.0f64 / 5.0).powi(2) / 4.0;
        for k in 0..=1000 {
            let p = -100.0 + 0.2 * k as f64;
            let gap = chi * (pwl_square(p, 100.0, 5) - p * p);
            assert!(gap >= -1e-12 && gap <= bound + 1e-12, "{p}: {gap}");
        }
        let c = VscLossCoeffs { phi: 0.12, psi: 0.0029, chi };
        let at100 = vsc_loss(100.0, 100.0, 5, &c);
        assert!((at100 - (0.12 + 0.29 + chi * 10_000.0)).abs() < 1e-12);
    }

    #[test]
    fn unbuilt_dc_line_carries_nothing() {
        let sys = full_featured();
        let m = build_model(&sys, &reps(1), &FailureScenario::intact(), ShedMode::Standard).unwrap();
        let mut lp = m.to_lp();
        for s in 1..=2 {
            let yd = m.var(&VarKey::Yd { s, line: 3, c: 1 }).unwrap();
            lp.set_bounds(yd, 0.0, 0.0);
        }
        let sol = solve_mip(&lp, &m.binaries()).unwrap();
        assert_eq!(sol.status, MipStatus::Optimal);
        for s in 1..=2 {
            for v in 1..=2 {
                let pv = m.value(&sol.x, &VarKey::Pv { s, v, line: 3, h: 1 }).unwrap();
                assert!(pv.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn first_hour_storage_recursion() {
        let sys = full_featured();
        let m = build_model(&sys, &reps(2), &FailureScenario::intact(), ShedMode::Standard).unwrap();
        let row = m.rows.iter().find(|r| r.name == "soc_s1_i2_h1").unwrap();
        let e = m.var(&VarKey::E { s: 1, bus: 2, h: 1 }).unwrap();
        let pc = m.var(&VarKey::Pc { s: 1, bus: 2, h: 1 }).unwrap();
        let pd = m.var(&VarKey::Pd { s: 1, bus: 2, h: 1 }).unwrap();
        let mut coeffs = row.coeffs.clone();
        coeffs.sort_by_key(|c| c.0);
        let mut expect = vec![(e, 1.0), (pc, -0.9), (pd, 1.0 / 0.9)];
        expect.sort_by_key(|c| c.0);
        assert_eq!(coeffs, expect);
        let linked = m.rows.iter().find(|r| r.name == "soc_s2_i2_h1").unwrap();
        let e_prev = m.var(&VarKey::E { s: 1, bus: 2, h: 2 }).unwrap();
        assert!(linked.coeffs.contains(&(e_prev, -1.0)));
        let ratio = m.rows.iter().find(|r| r.name == "epr_s1_i2").unwrap();
        // C = 100 needs S >= 300.
        let (sv, cv) = (m.var(&VarKey::S { s: 1, bus: 2 }).unwrap(), m.var(&VarKey::C { s: 1, bus: 2 }).unwrap());
        let mut x = vec![0.0; m.num_vars()];
        x[cv] = 100.0;
        x[sv] = 299.0;
        assert!(ratio.violation(&x) > 0.0);
        x[sv] = 300.0;
        assert!(ratio.violation(&x) <= 0.0);
    }

    #[test]
    fn partition_is_exhaustive_and_round_trips_the_objective() {
        let sys = full_featured();
        let m = build_model(&sys, &reps(2), &FailureScenario::intact(), ShedMode::Standard).unwrap();
        let b = partition_compact(&m).unwrap();
        let mut all: Vec<usize> = [&b.balance, &b.equality, &b.inequality, &b.master]
            .iter()
            .flat_map(|v| v.iter().copied())
            .collect();
        all.sort();
        assert_eq!(all, (0..m.rows.len()).collect::<Vec<_>>());
        let eq_families = m.rows.iter().filter(|r| r.family.block() == Block::Equality).count();
        assert_eq!(b.equality.len(), eq_families);
        let x: Vec<f64> = (0..m.num_vars()).map(|j| (j % 7) as f64 * 0.3).collect();
        assert!((b.objective(&x) - m.objective_value(&x)).abs() < 1e-9 * m.objective_value(&x).abs());
        assert_eq!(b.matrix(&m, Block::Balance, VarClass::P).len(), b.balance.len());
    }

    #[test]
    fn lp_dump_names_variables() {
        let sys = full_featured();
        let m = build_model(&sys, &reps(1), &FailureScenario::intact(), ShedMode::Standard).unwrap();
        let mut buf = Vec::new();
        m.write_lp(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("Y_s1_l2_c1"));
        assert!(text.contains("Binaries"));
        assert!(text.trim_end().ends_with("End"));
    }
}
