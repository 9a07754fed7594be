//! Chronological time-period clustering: adjacent-only Ward agglomeration of
//! days, then of hours, over joint load/wind series.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HOURS_PER_DAY: usize = 24;

/// Hourly per-unit load and wind factors.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlySeries {
    pub load: Vec<f64>,
    pub wind: Vec<f64>,
    pub label: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesRow {
    hour: usize,
    load_pu: f64,
    wind_pu: f64,
}

impl HourlySeries {
    pub fn new(load: Vec<f64>, wind: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if load.len() != wind.len() {
            return Err(Error::invalid(format!(
                "{} load values but {} wind values",
                load.len(),
                wind.len()
            )));
        }
        if load.is_empty() || !load.len().is_multiple_of(HOURS_PER_DAY) {
            return Err(Error::invalid(format!(
                "series length {} is not a positive multiple of 24",
                load.len()
            )));
        }
        for (k, (&l, &w)) in load.iter().zip(&wind).enumerate() {
            if !(0.0..=1.0).contains(&l) || !(0.0..=1.0).contains(&w) {
                return Err(Error::invalid(format!("hour {k}: values must lie in [0, 1]")));
            }
        }
        Ok(Self {
            load,
            wind,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load.is_empty()
    }

    pub fn days(&self) -> usize {
        self.len() / HOURS_PER_DAY
    }

    pub fn from_csv_reader(reader: impl Read, label: impl Into<String>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::invalid(format!("time series header: {e}")))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["hour", "load_pu", "wind_pu"] {
            return Err(Error::invalid("time series header must be hour,load_pu,wind_pu"));
        }
        let mut load = Vec::new();
        let mut wind = Vec::new();
        for (k, row) in rdr.deserialize::<SeriesRow>().enumerate() {
            let row = row.map_err(|e| {
                let line = e.position().map_or(k + 2, |p| p.line() as usize);
                Error::Parse {
                    line,
                    column: 0,
                    message: e.to_string(),
                }
            })?;
            load.push(row.load_pu);
            wind.push(row.wind_pu);
        }
        Self::new(load, wind, label)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file, path.display().to_string())
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (hour, (&load_pu, &wind_pu)) in self.load.iter().zip(&self.wind).enumerate() {
            w.serialize(SeriesRow {
                hour: hour + 1,
                load_pu,
                wind_pu,
            })
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }

    /// 48-dimensional day vectors: 24 load values followed by 24 wind values.
    fn day_vectors(&self) -> Vec<Vec<f64>> {
        (0..self.days())
            .map(|d| {
                let r = d * HOURS_PER_DAY..(d + 1) * HOURS_PER_DAY;
                let mut v = self.load[r.clone()].to_vec();
                v.extend_from_slice(&self.wind[r]);
                v
            })
            .collect()
    }
}

/// A run of consecutive items merged into one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ChronoCluster {
    pub members: Range<usize>,
    pub centroid: Vec<f64>,
    /// Mass behind the centroid: member count, or the summed day weights of
    /// member hours in the hour phase.
    pub weight: f64,
}

impl ChronoCluster {
    pub fn singleton(index: usize, point: Vec<f64>, weight: f64) -> Self {
        Self {
            members: index..index + 1,
            centroid: point,
            weight,
        }
    }

    pub fn count(&self) -> usize {
        self.members.len()
    }

    fn absorb(&mut self, right: &ChronoCluster) {
        debug_assert_eq!(self.members.end, right.members.start);
        let total = self.weight + right.weight;
        if total > 0.0 {
            for (a, b) in self.centroid.iter_mut().zip(&right.centroid) {
                *a += (b - *a) * (right.weight / total);
            }
        }
        self.weight = total;
        self.members.end = right.members.end;
    }
}

/// `sqrt(2 n1 n2 / (n1 + n2)) * ||c1 - c2||` with `n` the member counts.
pub fn ward_dissimilarity(c1: &ChronoCluster, c2: &ChronoCluster) -> f64 {
    let (n1, n2) = (c1.count() as f64, c2.count() as f64);
    let dist = c1
        .centroid
        .iter()
        .zip(&c2.centroid)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    (2.0 * n1 * n2 / (n1 + n2)).sqrt() * dist
}

/// Merges the closest adjacent pair until `target` clusters remain, calling
/// `after_merge` with the partition after every merge. Ties go to the
/// smallest left index.
pub fn agglomerate(
    mut clusters: Vec<ChronoCluster>,
    target: usize,
    mut after_merge: impl FnMut(&[ChronoCluster]),
) -> Vec<ChronoCluster> {
    assert!(target >= 1);
    let mut gaps: Vec<f64> = clusters
        .windows(2)
        .map(|w| ward_dissimilarity(&w[0], &w[1]))
        .collect();
    while clusters.len() > target {
        let mut k = 0;
        for (i, &g) in gaps.iter().enumerate() {
            if g < gaps[k] {
                k = i;
            }
        }
        let right = clusters.remove(k + 1);
        clusters[k].absorb(&right);
        gaps.remove(k);
        if k > 0 {
            gaps[k - 1] = ward_dissimilarity(&clusters[k - 1], &clusters[k]);
        }
        if k < gaps.len() {
            gaps[k] = ward_dissimilarity(&clusters[k], &clusters[k + 1]);
        }
        after_merge(&clusters);
    }
    clusters
}

/// Output of the day phase: centroid days laid end to end, each hour
/// carrying the number of real days its day-cluster stands for.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSeries {
    pub load: Vec<f64>,
    pub wind: Vec<f64>,
    pub hour_weights: Vec<f64>,
    /// Real-day interval of each day-cluster.
    pub day_clusters: Vec<Range<usize>>,
}

impl ReducedSeries {
    pub fn len(&self) -> usize {
        self.load.len()
    }

    pub fn is_empty(&self) -> bool {
        self.load.is_empty()
    }

    pub fn day_weights(&self) -> Vec<f64> {
        self.day_clusters.iter().map(|r| r.len() as f64).collect()
    }
}

pub fn select_representative_days(series: &HourlySeries, days: usize) -> Result<ReducedSeries> {
    let total = series.days();
    if days < 1 || days > total {
        return Err(Error::invalid(format!(
            "representative day count {days} outside 1..={total}"
        )));
    }
    let clusters: Vec<ChronoCluster> = series
        .day_vectors()
        .into_iter()
        .enumerate()
        .map(|(d, v)| ChronoCluster::singleton(d, v, 1.0))
        .collect();
    let clusters = agglomerate(clusters, days, |_| {});
    let mut out = ReducedSeries {
        load: Vec::with_capacity(days * HOURS_PER_DAY),
        wind: Vec::with_capacity(days * HOURS_PER_DAY),
        hour_weights: Vec::with_capacity(days * HOURS_PER_DAY),
        day_clusters: Vec::with_capacity(days),
    };
    for c in clusters {
        out.load.extend_from_slice(&c.centroid[..HOURS_PER_DAY]);
        out.wind.extend_from_slice(&c.centroid[HOURS_PER_DAY..]);
        out.hour_weights
            .extend(std::iter::repeat_n(c.weight, HOURS_PER_DAY));
        out.day_clusters.push(c.members);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeHour {
    pub load: f64,
    pub wind: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentativeSet {
    pub hours: Vec<RepresentativeHour>,
    /// Interval of reduced-series hours behind each representative.
    pub members: Vec<Range<usize>>,
    pub source: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RepRow {
    rep: usize,
    load_pu: f64,
    wind_pu: f64,
    weight: f64,
}

impl RepresentativeSet {
    /// A set built directly from `(load, wind, weight)` triples.
    pub fn from_hours(hours: Vec<RepresentativeHour>, source: impl Into<String>) -> Self {
        let members = (0..hours.len()).map(|k| k..k + 1).collect();
        Self {
            hours,
            members,
            source: source.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.hours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hours.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.hours.iter().map(|h| h.weight).sum()
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for (k, h) in self.hours.iter().enumerate() {
            w.serialize(RepRow {
                rep: k + 1,
                load_pu: h.load,
                wind_pu: h.wind,
                weight: h.weight,
            })
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_csv_reader(reader: impl Read, source: impl Into<String>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut hours = Vec::new();
        for (k, row) in rdr.deserialize::<RepRow>().enumerate() {
            let row = row.map_err(|e| Error::Parse {
                line: e.position().map_or(k + 2, |p| p.line() as usize),
                column: 0,
                message: e.to_string(),
            })?;
            hours.push(RepresentativeHour {
                load: row.load_pu,
                wind: row.wind_pu,
                weight: row.weight,
            });
        }
        if hours.is_empty() {
            return Err(Error::invalid("representative set is empty"));
        }
        Ok(Self::from_hours(hours, source))
    }
}

fn hour_clusters(reduced: &ReducedSeries) -> Vec<ChronoCluster> {
    (0..reduced.len())
        .map(|k| {
            ChronoCluster::singleton(
                k,
                vec![reduced.load[k], reduced.wind[k]],
                reduced.hour_weights[k],
            )
        })
        .collect()
}

fn to_representatives(clusters: &[ChronoCluster], source: &str) -> RepresentativeSet {
    RepresentativeSet {
        hours: clusters
            .iter()
            .map(|c| RepresentativeHour {
                load: c.centroid[0],
                wind: c.centroid[1],
                weight: c.weight,
            })
            .collect(),
        members: clusters.iter().map(|c| c.members.clone()).collect(),
        source: source.to_string(),
    }
}

/// Hour phase. Dissimilarities use member hour counts; centroids and final
/// weights use the day weights, so annual totals are conserved.
pub fn select_representative_hours(reduced: &ReducedSeries, hours: usize) -> Result<RepresentativeSet> {
    select_representative_hours_traced(reduced, hours, |_| {})
}

/// As [`select_representative_hours`], reporting the representative set
/// after every merge.
pub fn select_representative_hours_traced(
    reduced: &ReducedSeries,
    hours: usize,
    mut observe: impl FnMut(&RepresentativeSet),
) -> Result<RepresentativeSet> {
    if hours < 1 || hours > reduced.len() {
        return Err(Error::invalid(format!(
            "representative hour count {hours} outside 1..={}",
            reduced.len()
        )));
    }
    let clusters = agglomerate(hour_clusters(reduced), hours, |cs| {
        observe(&to_representatives(cs, "ctpc"))
    });
    Ok(to_representatives(&clusters, "ctpc"))
}

/// Both phases.
pub fn ctpc(series: &HourlySeries, days: usize, hours: usize) -> Result<RepresentativeSet> {
    let reduced = select_representative_days(series, days)?;
    let mut reps = select_representative_hours(&reduced, hours)?;
    reps.source = format!("{} ({days} days, {hours} hours)", series.label);
    Ok(reps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorCriterion {
    pub load: f64,
    pub wind: f64,
}

fn mean_nearest(real: &[f64], reps: impl Iterator<Item = f64>) -> f64 {
    let mut sorted: Vec<f64> = reps.collect();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = real
        .iter()
        .map(|&x| {
            let k = sorted.partition_point(|&r| r < x);
            let above = sorted.get(k).map_or(f64::INFINITY, |r| r - x);
            let below = if k > 0 { x - sorted[k - 1] } else { f64::INFINITY };
            above.min(below)
        })
        .sum();
    total / real.len() as f64
}

/// Mean distance from each real value to its nearest representative,
/// per feature.
pub fn error_criterion(real: &HourlySeries, reps: &RepresentativeSet) -> Result<ErrorCriterion> {
    if reps.is_empty() {
        return Err(Error::invalid("representative set is empty"));
    }
    Ok(ErrorCriterion {
        load: mean_nearest(&real.load, reps.hours.iter().map(|h| h.load)),
        wind: mean_nearest(&real.wind, reps.hours.iter().map(|h| h.wind)),
    })
}
