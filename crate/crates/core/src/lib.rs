//! Multi-stage co-planning of HVAC/HVDC transmission lines, battery storage
//! and wind farms with hurricane resilience, solved by Benders
//! decomposition over a self-contained LP/MIP core.

// Input checks are written as `!(x >= 0.0)` so that NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benders;
pub mod ctpc;
pub mod error;
pub mod formulation;
pub mod hurricane;
pub mod lp;
pub mod report;
pub mod system;

pub use ctpc::{HourlySeries, RepresentativeHour, RepresentativeSet};
pub use error::{Error, Result};
pub use hurricane::{FailureScenario, HurricaneConfig, ResilienceContingency};
pub use system::{
    capital_recovery_factor, Bus, Generator, Line, LineKind, PlanningConfig, PowerSystem,
    SystemFile,
};
pub use benders::{run_benders, run_planning, BendersOptions, PlanOutcome, PlanStatus, ResilienceOptions};
pub use formulation::{build_model, MilpModel, ShedMode};
pub use report::{render_report, PlanReport};
