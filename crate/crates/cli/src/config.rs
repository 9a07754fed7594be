//! Run configuration: everything a planning run needs besides the system
//! and the load/wind data.

use std::path::Path;

use anyhow::{Context, Result};
use gridplan::benders::DspRoute;
use gridplan::HurricaneConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Representative days kept by the first clustering phase.
    pub days: usize,
    /// Representative hours kept by the second phase.
    pub hours: usize,
    pub seed: u64,
    /// Overrides the system file's convergence tolerance when set.
    pub eps: Option<f64>,
    pub max_iterations: usize,
    pub multi_cut: bool,
    pub route: DspRoute,
    pub hvdc: bool,
    pub bes: bool,
    pub resilience: bool,
    pub hurricane: HurricaneConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            days: 120,
            hours: 96,
            seed: 0,
            eps: None,
            max_iterations: 200,
            multi_cut: true,
            route: DspRoute::Primal,
            hvdc: true,
            bes: true,
            resilience: true,
            hurricane: HurricaneConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}
