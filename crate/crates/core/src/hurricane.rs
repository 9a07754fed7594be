//! Hurricane hazard: wind-speed scenarios, fragility-based line failure
//! probabilities, failure-configuration enumeration and risk scoring.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Weibull};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{LineKind, PowerSystem};

/// Monotone piecewise-linear map from wind speed (m/s) to failure
/// probability, flat beyond the first and last breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct FragilityCurve {
    points: Vec<(f64, f64)>,
}

impl TryFrom<Vec<(f64, f64)>> for FragilityCurve {
    type Error = Error;
    fn try_from(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<FragilityCurve> for Vec<(f64, f64)> {
    fn from(c: FragilityCurve) -> Self {
        c.points
    }
}

impl FragilityCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("fragility curve needs at least one breakpoint"));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid("fragility speeds must be strictly increasing"));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::invalid("fragility probabilities must be nondecreasing"));
            }
        }
        if points
            .iter()
            .any(|&(v, p)| !v.is_finite() || !(0.0..=1.0).contains(&p))
        {
            return Err(Error::invalid("fragility probabilities must lie in [0, 1]"));
        }
        Ok(Self { points })
    }

    /// Line conductor default: 0 below 30 m/s, 1 from 60 m/s.
    pub fn default_line() -> Self {
        Self::new(vec![(30.0, 0.0), (60.0, 1.0)]).unwrap()
    }

    /// Tower default: 0 below 35 m/s, 1 from 70 m/s.
    pub fn default_tower() -> Self {
        Self::new(vec![(35.0, 0.0), (70.0, 1.0)]).unwrap()
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn probability(&self, speed: f64) -> f64 {
        let pts = &self.points;
        if speed <= pts[0].0 {
            return pts[0].1;
        }
        let last = pts[pts.len() - 1];
        if speed >= last.0 {
            return last.1;
        }
        let k = pts.partition_point(|&(v, _)| v <= speed);
        let (v0, p0) = pts[k - 1];
        let (v1, p1) = pts[k];
        p0 + (p1 - p0) * (speed - v0) / (v1 - v0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedDistribution {
    Weibull { shape: f64, scale: f64 },
    PointMass { speed: f64 },
}

impl Default for SpeedDistribution {
    fn default() -> Self {
        SpeedDistribution::Weibull {
            shape: 2.0,
            scale: 45.0,
        }
    }
}

pub fn sample_hurricane_speeds(dist: &SpeedDistribution, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    match *dist {
        SpeedDistribution::PointMass { speed } => {
            if !(speed >= 0.0) || !speed.is_finite() {
                return Err(Error::invalid("point-mass speed must be finite and non-negative"));
            }
            Ok(vec![speed; n])
        }
        SpeedDistribution::Weibull { shape, scale } => {
            let w = Weibull::new(scale, shape)
                .map_err(|e| Error::invalid(format!("Weibull parameters: {e}")))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..n).map(|_| w.sample(&mut rng)).collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurricaneSpeedScenario {
    /// m/s
    pub speed: f64,
    pub probability: f64,
}

/// Groups equal samples into atoms of probability `count / n`.
pub fn empirical_atoms(samples: &[f64]) -> Vec<HurricaneSpeedScenario> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut atoms: Vec<HurricaneSpeedScenario> = Vec::new();
    for v in sorted {
        match atoms.last_mut() {
            Some(a) if a.speed == v => a.probability += 1.0 / n,
            _ => atoms.push(HurricaneSpeedScenario {
                speed: v,
                probability: 1.0 / n,
            }),
        }
    }
    atoms
}

#[derive(PartialEq)]
struct Candidate {
    cost: f64,
    index: usize,
    version: u64,
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    // Min-heap on cost, then on index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// Backward reduction of a discrete speed distribution to `k` atoms. Each
/// step deletes the atom with the smallest `probability x distance to the
/// nearest survivor` and moves its probability onto that survivor (the
/// slower one on a tie).
pub fn reduce_atoms(atoms: &[HurricaneSpeedScenario], k: usize) -> Result<Vec<HurricaneSpeedScenario>> {
    if k < 1 {
        return Err(Error::invalid("target scenario count must be at least 1"));
    }
    let mut atoms = atoms.to_vec();
    atoms.sort_by(|a, b| a.speed.total_cmp(&b.speed));
    if atoms.windows(2).any(|w| w[0].speed == w[1].speed) {
        return Err(Error::invalid("speed atoms must be distinct"));
    }
    if k > atoms.len() {
        return Err(Error::invalid(format!(
            "cannot keep {k} scenarios from {} distinct speeds",
            atoms.len()
        )));
    }
    let n = atoms.len();
    let mut prob: Vec<f64> = atoms.iter().map(|a| a.probability).collect();
    let mut prev: Vec<Option<usize>> = (0..n).map(|i| i.checked_sub(1)).collect();
    let mut next: Vec<Option<usize>> = (0..n).map(|i| (i + 1 < n).then_some(i + 1)).collect();
    let mut alive = vec![true; n];
    let mut version = vec![0u64; n];
    let speed = |i: usize| atoms[i].speed;

    let nearest = |i: usize, prev: &[Option<usize>], next: &[Option<usize>]| -> Option<(usize, f64)> {
        let left = prev[i].map(|j| (j, speed(i) - speed(j)));
        let right = next[i].map(|j| (j, speed(j) - speed(i)));
        match (left, right) {
            (Some(l), Some(r)) => Some(if r.1 < l.1 { r } else { l }),
            (l, r) => l.or(r),
        }
    };

    let mut heap = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<Candidate>, i: usize, prob: &[f64], prev: &[Option<usize>], next: &[Option<usize>], version: &[u64]| {
        if let Some((_, d)) = nearest(i, prev, next) {
            heap.push(Candidate {
                cost: prob[i] * d,
                index: i,
                version: version[i],
            });
        }
    };
    for i in 0..n {
        push(&mut heap, i, &prob, &prev, &next, &version);
    }
    let mut remaining = n;
    while remaining > k {
        let c = heap.pop().expect("at least two atoms remain");
        if !alive[c.index] || c.version != version[c.index] {
            continue;
        }
        let i = c.index;
        let (j, _) = nearest(i, &prev, &next).expect("at least two atoms remain");
        prob[j] += prob[i];
        prob[i] = 0.0;
        alive[i] = false;
        if let Some(p) = prev[i] {
            next[p] = next[i];
        }
        if let Some(q) = next[i] {
            prev[q] = prev[i];
        }
        remaining -= 1;
        for nb in [prev[i], next[i]].into_iter().flatten() {
            version[nb] += 1;
            push(&mut heap, nb, &prob, &prev, &next, &version);
        }
    }
    Ok((0..n)
        .filter(|&i| alive[i])
        .map(|i| HurricaneSpeedScenario {
            speed: atoms[i].speed,
            probability: prob[i],
        })
        .collect())
}

/// Reduces equally likely samples to `k` speed scenarios.
pub fn reduce_scenarios(samples: &[f64], k: usize) -> Result<Vec<HurricaneSpeedScenario>> {
    reduce_atoms(&empirical_atoms(samples), k)
}

/// Towers along `length_km` with one tower per `spacing_m`; a partial final
/// span still carries a tower.
pub fn tower_count(length_km: f64, spacing_m: f64) -> u32 {
    ((length_km * 1000.0 / spacing_m).ceil() as u32).max(1)
}

/// Probability that a line fails through its conductor or any of its `t`
/// towers.
pub fn line_failure_probability(fp_line: f64, fp_tower: f64, t: u32) -> f64 {
    let towers = 1.0 - (1.0 - fp_tower).powi(t as i32);
    fp_line + towers - fp_line * towers
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VulnerableLine {
    pub line: u32,
    pub failure_probability: f64,
}

/// In-zone lines whose failure probability at `speed` exceeds `threshold`,
/// most fragile first (ties by line id). `built` lists candidate lines
/// currently constructed; only those candidates are exposed.
pub fn select_vulnerable_lines(
    system: &PowerSystem,
    built: &BTreeSet<u32>,
    speed: f64,
    line_curve: &FragilityCurve,
    tower_curve: &FragilityCurve,
    threshold: f64,
) -> Vec<VulnerableLine> {
    let fp_line = line_curve.probability(speed);
    let fp_tower = tower_curve.probability(speed);
    let mut out: Vec<VulnerableLine> = system
        .lines
        .iter()
        .filter(|l| l.in_hurricane_zone)
        .filter(|l| l.kind == LineKind::Existing || built.contains(&l.id))
        .map(|l| {
            let t = tower_count(l.length, system.config.tower_spacing);
            VulnerableLine {
                line: l.id,
                failure_probability: line_failure_probability(fp_line, fp_tower, t),
            }
        })
        .filter(|v| v.failure_probability > threshold)
        .collect();
    out.sort_by(|a, b| {
        b.failure_probability
            .total_cmp(&a.failure_probability)
            .then(a.line.cmp(&b.line))
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureScenario {
    /// Failed lines, in vulnerable-list order.
    pub failed: Vec<u32>,
    /// One flag per vulnerable line; `true` means failed.
    pub states: Vec<bool>,
    pub probability: f64,
    /// Index of the parent speed scenario.
    pub speed_index: usize,
}

impl FailureScenario {
    pub fn intact() -> Self {
        Self {
            failed: Vec::new(),
            states: Vec::new(),
            probability: 1.0,
            speed_index: 0,
        }
    }

    pub fn is_intact(&self) -> bool {
        self.failed.is_empty()
    }
}

pub const DEFAULT_MAX_VULNERABLE: usize = 12;

/// All `2^M` failure configurations of the vulnerable lines. Configuration
/// `d` fails line `k` iff bit `k` of `d` is set.
pub fn enumerate_failure_scenarios(
    vulnerable: &[VulnerableLine],
    speed_index: usize,
    cap: usize,
) -> Result<Vec<FailureScenario>> {
    let m = vulnerable.len();
    if m > cap {
        return Err(Error::invalid(format!(
            "{m} vulnerable lines exceed the enumeration cap of {cap}; raise the failure-probability threshold or the cap"
        )));
    }
    Ok((0..1usize << m)
        .map(|d| {
            let states: Vec<bool> = (0..m).map(|k| (d >> k) & 1 == 1).collect();
            let probability = vulnerable
                .iter()
                .zip(&states)
                .map(|(v, &x)| {
                    if x {
                        v.failure_probability
                    } else {
                        1.0 - v.failure_probability
                    }
                })
                .product();
            FailureScenario {
                failed: vulnerable
                    .iter()
                    .zip(&states)
                    .filter(|(_, &x)| x)
                    .map(|(v, _)| v.line)
                    .collect(),
                states,
                probability,
                speed_index,
            }
        })
        .collect())
}

/// Indices of scenarios whose probability exceeds `ratio x max`; the most
/// probable scenarios are always kept.
pub fn filter_probable(scenarios: &[FailureScenario], ratio: f64) -> Vec<usize> {
    let max = scenarios
        .iter()
        .map(|s| s.probability)
        .fold(f64::NEG_INFINITY, f64::max);
    (0..scenarios.len())
        .filter(|&i| {
            let p = scenarios[i].probability;
            p > ratio * max || p == max
        })
        .collect()
}

pub fn resilience_risk_index(hurricane_probability: f64, scenario_probability: f64, total_shed: f64) -> Result<f64> {
    if total_shed < -1e-6 {
        return Err(Error::invalid(format!("negative load shed {total_shed}")));
    }
    Ok(hurricane_probability * scenario_probability * total_shed.max(0.0))
}

/// Max-normalized risk indices and the selection flags (`normalized > threshold`).
pub fn normalize_risk(rri: &[f64], threshold: f64) -> Vec<(f64, bool)> {
    let max = rri.iter().copied().fold(0.0_f64, f64::max);
    rri.iter()
        .map(|&r| {
            let n = if max > 0.0 { r / max } else { 0.0 };
            (n, n > threshold)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceContingency {
    pub speed: f64,
    pub hurricane_probability: f64,
    pub scenario: FailureScenario,
    /// Total load shed (MWh over representative hours) when evaluated.
    pub total_shed: f64,
    pub rri: f64,
    pub normalized_rri: f64,
    pub selected: bool,
}

fn default_samples() -> usize {
    1000
}
fn default_scenarios() -> usize {
    5
}
fn default_threshold() -> f64 {
    0.01
}
fn default_ratio() -> f64 {
    0.2
}
fn default_cap() -> usize {
    DEFAULT_MAX_VULNERABLE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurricaneConfig {
    #[serde(default)]
    pub distribution: SpeedDistribution,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_scenarios")]
    pub scenarios: usize,
    #[serde(default = "FragilityCurve::default_line")]
    pub line_curve: FragilityCurve,
    #[serde(default = "FragilityCurve::default_tower")]
    pub tower_curve: FragilityCurve,
    /// Lines need a failure probability above this to count as vulnerable.
    #[serde(default = "default_threshold")]
    pub failure_threshold: f64,
    #[serde(default = "default_cap")]
    pub max_vulnerable: usize,
    /// Failure configurations need this share of the largest probability.
    #[serde(default = "default_ratio")]
    pub probable_ratio: f64,
    /// Normalized risk index above which a configuration becomes a contingency.
    #[serde(default = "default_ratio")]
    pub rri_threshold: f64,
}

impl Default for HurricaneConfig {
    fn default() -> Self {
        Self {
            distribution: SpeedDistribution::default(),
            samples: default_samples(),
            scenarios: default_scenarios(),
            line_curve: FragilityCurve::default_line(),
            tower_curve: FragilityCurve::default_tower(),
            failure_threshold: default_threshold(),
            max_vulnerable: DEFAULT_MAX_VULNERABLE,
            probable_ratio: default_ratio(),
            rri_threshold: default_ratio(),
        }
    }
}

impl HurricaneConfig {
    /// Sampled and reduced speed scenarios. A point mass yields one scenario.
    pub fn speed_scenarios(&self, seed: u64) -> Result<Vec<HurricaneSpeedScenario>> {
        let samples = sample_hurricane_speeds(&self.distribution, self.samples, seed)?;
        let atoms = empirical_atoms(&samples);
        let k = self.scenarios.min(atoms.len());
        reduce_atoms(&atoms, k)
    }

    /// Probable failure configurations over all speed scenarios for the
    /// given built set, in ascending (speed, configuration) order.
    pub fn probable_failures(
        &self,
        system: &PowerSystem,
        built: &BTreeSet<u32>,
        speeds: &[HurricaneSpeedScenario],
    ) -> Result<Vec<FailureScenario>> {
        let mut all = Vec::new();
        for (k, hs) in speeds.iter().enumerate() {
            let vulnerable = select_vulnerable_lines(
                system,
                built,
                hs.speed,
                &self.line_curve,
                &self.tower_curve,
                self.failure_threshold,
            );
            all.extend(enumerate_failure_scenarios(&vulnerable, k, self.max_vulnerable)?);
        }
        let keep = filter_probable(&all, self.probable_ratio);
        Ok(keep.into_iter().map(|i| all[i].clone()).collect())
    }
}
