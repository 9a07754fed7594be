//! Planning-problem data: buses, lines, generators and the planning
//! configuration, plus the derived connectivity matrices.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    /// MW
    pub peak_load: f64,
    #[serde(default)]
    pub is_bes_candidate: bool,
    #[serde(default)]
    pub is_wf_candidate: bool,
    /// MW
    #[serde(default)]
    pub wf_capacity_max: f64,
    /// MW
    #[serde(default)]
    pub bes_power_max: f64,
    /// MWh
    #[serde(default)]
    pub bes_energy_max: f64,
    /// $/MWh of storage capacity
    #[serde(default)]
    pub bes_energy_cost: f64,
    /// $/MW of storage power
    #[serde(default)]
    pub bes_power_cost: f64,
    /// 10^6 $/MW
    #[serde(default)]
    pub wf_invest_cost: f64,
    /// $/MWh
    #[serde(default)]
    pub shed_cost: f64,
    /// $/MWh
    #[serde(default)]
    pub curtail_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Existing,
    CandidateAc,
    CandidateDc,
}

impl LineKind {
    pub fn is_candidate(self) -> bool {
        !matches!(self, LineKind::Existing)
    }
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: u32,
    pub from_bus: u32,
    pub to_bus: u32,
    pub kind: LineKind,
    #[serde(default = "one")]
    pub circuits: u32,
    /// Per-unit susceptance; HVAC lines only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub susceptance_pu: Option<f64>,
    /// MW
    pub flow_max: f64,
    /// km
    #[serde(default)]
    pub length: f64,
    /// 10^6 $/km
    #[serde(default)]
    pub invest_cost: f64,
    /// Right-of-way cost, 10^6 $/km
    #[serde(default)]
    pub row_cost: f64,
    /// 10^6 $, charged on the first corridor of an HVAC candidate.
    #[serde(default)]
    pub substation_cost: f64,
    /// 10^6 $/MW per converter; HVDC only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vsc_cost: Option<f64>,
    #[serde(default)]
    pub in_hurricane_zone: bool,
    #[serde(default = "one")]
    pub corridor_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: u32,
    pub p_min: f64,
    pub p_max: f64,
    /// $/MWh per linear segment, nondecreasing.
    pub segment_costs: Vec<f64>,
    pub ramp_up: f64,
    pub ramp_down: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lifetimes {
    pub line: u32,
    pub bes: u32,
    pub wf: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VscLossCoeffs {
    pub phi: f64,
    pub psi: f64,
    pub chi: f64,
}

impl VscLossCoeffs {
    /// Converter loss `phi + psi |p| + chi p^2` (MW).
    pub fn loss(&self, p: f64) -> f64 {
        self.phi + self.psi * p.abs() + self.chi * p * p
    }
}

fn default_eta() -> f64 {
    0.9
}
fn default_reserve_wind_share() -> f64 {
    0.05
}
fn default_reserve_load_share() -> f64 {
    0.03
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningConfig {
    /// Number of two-year stages.
    pub stages: usize,
    pub interest_rate: f64,
    pub lifetimes: Lifetimes,
    pub rps_alpha: f64,
    pub wind_curtail_beta: f64,
    pub hourly_shed_gamma: f64,
    pub annual_shed_phi: f64,
    pub reserve_cost_xi: f64,
    /// Energy-to-power ratio of storage, hours.
    pub bes_epr: f64,
    /// MVA
    pub base_power: f64,
    pub vsc_loss_coeffs: VscLossCoeffs,
    pub cost_segments: usize,
    pub pwl_blocks: usize,
    pub benders_eps: f64,
    /// Load growth factor per stage, relative to the peak loads.
    pub load_growth: Vec<f64>,
    /// Horizontal tower spacing, m.
    pub tower_spacing: f64,
    /// rad
    pub angle_bound: f64,
    pub reference_bus: u32,
    #[serde(default = "default_eta")]
    pub bes_charge_eff: f64,
    #[serde(default = "default_eta")]
    pub bes_discharge_eff: f64,
    #[serde(default = "default_reserve_wind_share")]
    pub reserve_wind_share: f64,
    #[serde(default = "default_reserve_load_share")]
    pub reserve_load_share: f64,
    /// Weight annual curtailment / shedding sums by the representative-hour
    /// weights instead of summing representative hours directly.
    #[serde(default)]
    pub weighted_annual_sums: bool,
    /// Commitment and storage-mode binaries are decided by the master
    /// problem; when false they are relaxed to `[0, 1]` in the subproblems.
    #[serde(default = "default_true")]
    pub operational_binaries: bool,
}

impl PlanningConfig {
    pub fn investment_discount(&self, stage: usize) -> f64 {
        2.0 / (1.0 + self.interest_rate).powi(2 * stage as i32 - 1)
    }

    pub fn operation_discount(&self, stage: usize) -> f64 {
        2.0 / (1.0 + self.interest_rate).powi(2 * stage as i32)
    }
}

/// Ratio converting a present investment into an equivalent annual cost.
pub fn capital_recovery_factor(rate: f64, lifetime: u32) -> Result<f64> {
    if lifetime == 0 {
        return Err(Error::invalid("lifetime must be at least one year"));
    }
    if !(rate >= 0.0) {
        return Err(Error::invalid(format!("interest rate {rate} is negative")));
    }
    if rate == 0.0 {
        return Ok(1.0 / lifetime as f64);
    }
    if lifetime == 1 {
        return Ok(1.0 + rate);
    }
    let growth = (1.0 + rate).powi(lifetime as i32);
    Ok(rate * growth / (growth - 1.0))
}

/// On-disk layout of a system file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub config: PlanningConfig,
}

/// A validated planning system. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSystem {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub config: PlanningConfig,
    bus_index: HashMap<u32, usize>,
    line_index: HashMap<u32, usize>,
}

/// Signed line/bus incidence: each column has +1 at `from` and -1 at `to`.
#[derive(Debug, Clone, PartialEq)]
pub struct Incidence {
    pub n_buses: usize,
    /// Line ids, one per column.
    pub lines: Vec<u32>,
    /// (from bus index, to bus index) per column.
    pub ends: Vec<(usize, usize)>,
}

impl Incidence {
    /// Bus-major dense matrix (`n_buses` rows, one column per line).
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.ends.len()]; self.n_buses];
        for (k, &(f, t)) in self.ends.iter().enumerate() {
            m[f][k] += 1.0;
            m[t][k] -= 1.0;
        }
        m
    }
}

/// One voltage-source converter at an end of an HVDC candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Converter {
    pub line: u32,
    pub bus: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Connectivity {
    /// Existing lines.
    pub a: Incidence,
    /// HVAC candidate lines.
    pub k: Incidence,
    /// HVDC line x converter membership (rows: HVDC lines).
    pub kl: Vec<Vec<f64>>,
    /// Converter x bus attachment (rows: converters).
    pub kb: Vec<Vec<f64>>,
    pub converters: Vec<Converter>,
}

impl PowerSystem {
    pub fn new(file: SystemFile) -> Result<Self> {
        let SystemFile {
            buses,
            lines,
            generators,
            config,
        } = file;
        let mut bus_index = HashMap::new();
        for (k, b) in buses.iter().enumerate() {
            if bus_index.insert(b.id, k).is_some() {
                return Err(Error::invalid(format!("duplicate bus id {}", b.id)));
            }
        }
        let mut line_index = HashMap::new();
        for (k, l) in lines.iter().enumerate() {
            if line_index.insert(l.id, k).is_some() {
                return Err(Error::invalid(format!("duplicate line id {}", l.id)));
            }
        }
        let sys = PowerSystem {
            buses,
            lines,
            generators,
            config,
            bus_index,
            line_index,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SystemFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::new(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_file(&self) -> SystemFile {
        SystemFile {
            buses: self.buses.clone(),
            lines: self.lines.clone(),
            generators: self.generators.clone(),
            config: self.config.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("system data always serializes")
    }

    /// Copy with every HVDC candidate removed.
    pub fn without_hvdc_candidates(&self) -> Result<Self> {
        let mut file = self.to_file();
        file.lines.retain(|l| l.kind != LineKind::CandidateDc);
        Self::new(file)
    }

    /// Copy in which no bus may host new storage.
    pub fn without_bes_candidates(&self) -> Result<Self> {
        let mut file = self.to_file();
        for b in &mut file.buses {
            b.is_bes_candidate = false;
            b.bes_power_max = 0.0;
            b.bes_energy_max = 0.0;
        }
        Self::new(file)
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.bus_index.get(&id).copied()
    }

    pub fn line_index(&self, id: u32) -> Option<usize> {
        self.line_index.get(&id).copied()
    }

    pub fn line(&self, id: u32) -> Option<&Line> {
        self.line_index(id).map(|k| &self.lines[k])
    }

    pub fn total_peak_load(&self) -> f64 {
        self.buses.iter().map(|b| b.peak_load).sum()
    }

    pub fn lines_of(&self, kind: LineKind) -> impl Iterator<Item = (usize, &Line)> {
        self.lines
            .iter()
            .enumerate()
            .filter(move |(_, l)| l.kind == kind)
    }

    /// Hurricane-zone tower count of `line`: a partial final span still
    /// carries a tower.
    pub fn tower_count(&self, line: &Line) -> u32 {
        crate::hurricane::tower_count(line.length, self.config.tower_spacing)
    }

    /// Big-M of the disjunctive HVAC candidate flow rows.
    pub fn big_m(&self, line: &Line) -> f64 {
        self.config.base_power * line.susceptance_pu.unwrap_or(0.0) * 2.0 * self.config.angle_bound
    }

    pub fn connectivity(&self) -> Connectivity {
        let n = self.buses.len();
        let incidence = |kind| {
            let (lines, ends) = self
                .lines_of(kind)
                .map(|(_, l)| (l.id, (self.bus_index[&l.from_bus], self.bus_index[&l.to_bus])))
                .unzip();
            Incidence {
                n_buses: n,
                lines,
                ends,
            }
        };
        let a = incidence(LineKind::Existing);
        let k = incidence(LineKind::CandidateAc);
        let dc: Vec<&Line> = self.lines_of(LineKind::CandidateDc).map(|(_, l)| l).collect();
        let mut converters = Vec::with_capacity(2 * dc.len());
        for l in &dc {
            converters.push(Converter {
                line: l.id,
                bus: self.bus_index[&l.from_bus],
            });
            converters.push(Converter {
                line: l.id,
                bus: self.bus_index[&l.to_bus],
            });
        }
        let mut kl = vec![vec![0.0; converters.len()]; dc.len()];
        for (r, row) in kl.iter_mut().enumerate() {
            row[2 * r] = 1.0;
            row[2 * r + 1] = 1.0;
        }
        let kb = converters
            .iter()
            .map(|c| {
                let mut row = vec![0.0; n];
                row[c.bus] = 1.0;
                row
            })
            .collect();
        Connectivity {
            a,
            k,
            kl,
            kb,
            converters,
        }
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        if self.buses.is_empty() {
            return Err(Error::invalid("system has no buses"));
        }
        if c.stages == 0 {
            return Err(Error::invalid("config.stages must be at least 1"));
        }
        if !(c.interest_rate >= 0.0) {
            return Err(Error::invalid("config.interest_rate must be non-negative"));
        }
        for (name, v) in [
            ("rps_alpha", c.rps_alpha),
            ("wind_curtail_beta", c.wind_curtail_beta),
            ("hourly_shed_gamma", c.hourly_shed_gamma),
            ("annual_shed_phi", c.annual_shed_phi),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("config.{name} = {v} is outside [0, 1]")));
            }
        }
        for (name, v) in [
            ("reserve_cost_xi", c.reserve_cost_xi),
            ("bes_epr", c.bes_epr),
            ("reserve_wind_share", c.reserve_wind_share),
            ("reserve_load_share", c.reserve_load_share),
            ("vsc_loss_coeffs.phi", c.vsc_loss_coeffs.phi),
            ("vsc_loss_coeffs.psi", c.vsc_loss_coeffs.psi),
            ("vsc_loss_coeffs.chi", c.vsc_loss_coeffs.chi),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("config.{name} must be finite and non-negative")));
            }
        }
        if c.vsc_loss_coeffs.psi >= 1.0 {
            return Err(Error::invalid("config.vsc_loss_coeffs.psi must be below 1"));
        }
        for (name, eta) in [
            ("bes_charge_eff", c.bes_charge_eff),
            ("bes_discharge_eff", c.bes_discharge_eff),
        ] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::invalid(format!("config.{name} must lie in (0, 1]")));
            }
        }
        if c.cost_segments == 0 || c.pwl_blocks == 0 {
            return Err(Error::invalid("config.cost_segments and config.pwl_blocks must be >= 1"));
        }
        if !(c.benders_eps > 0.0) {
            return Err(Error::invalid("config.benders_eps must be positive"));
        }
        if !(c.base_power > 0.0) || !(c.angle_bound > 0.0) || !(c.tower_spacing > 0.0) {
            return Err(Error::invalid(
                "config.base_power, angle_bound and tower_spacing must be positive",
            ));
        }
        if c.lifetimes.line == 0 || c.lifetimes.bes == 0 || c.lifetimes.wf == 0 {
            return Err(Error::invalid("config.lifetimes entries must be at least 1"));
        }
        if c.load_growth.len() != c.stages {
            return Err(Error::invalid(format!(
                "config.load_growth has {} entries for {} stages",
                c.load_growth.len(),
                c.stages
            )));
        }
        if c.load_growth.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("config.load_growth must be nondecreasing"));
        }
        if self.bus_index(c.reference_bus).is_none() {
            return Err(Error::DanglingReference(format!(
                "config.reference_bus {} is not a bus",
                c.reference_bus
            )));
        }

        for b in &self.buses {
            let fields = [
                ("peak_load", b.peak_load),
                ("wf_capacity_max", b.wf_capacity_max),
                ("bes_power_max", b.bes_power_max),
                ("bes_energy_max", b.bes_energy_max),
                ("bes_energy_cost", b.bes_energy_cost),
                ("bes_power_cost", b.bes_power_cost),
                ("wf_invest_cost", b.wf_invest_cost),
                ("shed_cost", b.shed_cost),
                ("curtail_cost", b.curtail_cost),
            ];
            for (name, v) in fields {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::NegativeCapacity(format!("bus {}: {name} = {v}", b.id)));
                }
            }
            if b.is_bes_candidate != (b.bes_power_max > 0.0 && b.bes_energy_max > 0.0) {
                return Err(Error::invalid(format!(
                    "bus {}: is_bes_candidate disagrees with its storage limits",
                    b.id
                )));
            }
            if b.is_wf_candidate != (b.wf_capacity_max > 0.0) {
                return Err(Error::invalid(format!(
                    "bus {}: is_wf_candidate disagrees with wf_capacity_max",
                    b.id
                )));
            }
        }

        for l in &self.lines {
            for end in [l.from_bus, l.to_bus] {
                if self.bus_index(end).is_none() {
                    return Err(Error::DanglingReference(format!(
                        "line {} references bus {end}",
                        l.id
                    )));
                }
            }
            if l.from_bus == l.to_bus {
                return Err(Error::invalid(format!("line {} starts and ends at bus {}", l.id, l.from_bus)));
            }
            if !(l.flow_max > 0.0) {
                return Err(Error::NegativeCapacity(format!("line {}: flow_max = {}", l.id, l.flow_max)));
            }
            for (name, v) in [
                ("length", l.length),
                ("invest_cost", l.invest_cost),
                ("row_cost", l.row_cost),
                ("substation_cost", l.substation_cost),
            ] {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::NegativeCapacity(format!("line {}: {name} = {v}", l.id)));
                }
            }
            if !(1..=2).contains(&l.circuits) {
                return Err(Error::invalid(format!("line {}: circuits must be 1 or 2", l.id)));
            }
            if l.corridor_count == 0 {
                return Err(Error::invalid(format!("line {}: corridor_count must be >= 1", l.id)));
            }
            match l.kind {
                LineKind::Existing | LineKind::CandidateAc => {
                    if !l.susceptance_pu.is_some_and(|b| b > 0.0) {
                        return Err(Error::invalid(format!(
                            "line {}: HVAC lines need a positive susceptance_pu",
                            l.id
                        )));
                    }
                    if l.vsc_cost.is_some() {
                        return Err(Error::invalid(format!("line {}: vsc_cost on an HVAC line", l.id)));
                    }
                }
                LineKind::CandidateDc => {
                    if l.susceptance_pu.is_some() {
                        return Err(Error::invalid(format!("line {}: HVDC line with susceptance", l.id)));
                    }
                    if !l.vsc_cost.is_some_and(|v| v >= 0.0) {
                        return Err(Error::invalid(format!("line {}: HVDC line needs vsc_cost", l.id)));
                    }
                }
            }
            if l.kind == LineKind::Existing && l.corridor_count != 1 {
                return Err(Error::invalid(format!("line {}: existing lines have one corridor", l.id)));
            }
        }

        for (k, g) in self.generators.iter().enumerate() {
            if self.bus_index(g.bus).is_none() {
                return Err(Error::DanglingReference(format!("generator {k} references bus {}", g.bus)));
            }
            if !(g.p_min >= 0.0 && g.p_min <= g.p_max) {
                return Err(Error::NegativeCapacity(format!(
                    "generator {k}: need 0 <= p_min <= p_max, got {} / {}",
                    g.p_min, g.p_max
                )));
            }
            if g.segment_costs.len() != c.cost_segments {
                return Err(Error::invalid(format!(
                    "generator {k}: {} segment costs, config.cost_segments = {}",
                    g.segment_costs.len(),
                    c.cost_segments
                )));
            }
            if g.segment_costs.iter().any(|v| !(*v >= 0.0))
                || g.segment_costs.windows(2).any(|w| w[1] < w[0])
            {
                return Err(Error::invalid(format!(
                    "generator {k}: segment costs must be non-negative and nondecreasing"
                )));
            }
            if !(g.ramp_up > 0.0 && g.ramp_down > 0.0) {
                return Err(Error::invalid(format!("generator {k}: ramps must be positive")));
            }
        }
        Ok(())
    }
}
