//! Batch front end: argument parsing and pipeline wiring
//! (cluster, hurricane model, planning, reports).

pub mod config;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gridplan::benders::THREADS_ENV;
use gridplan::ctpc::{ctpc, error_criterion};
use gridplan::hurricane::select_vulnerable_lines;
use gridplan::{
    build_model, render_report, run_planning, BendersOptions, FailureScenario, HourlySeries, PlanStatus,
    PowerSystem, RepresentativeSet, ResilienceOptions, ShedMode,
};
use serde::Serialize;

use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gridplan", version, about = "Hurricane-resilient co-planning of lines, storage and wind farms")]
pub struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a system file (and optionally data and config) and summarize it.
    Validate(ValidateArgs),
    /// Reduce an hourly load/wind year to weighted representative hours.
    Cluster(ClusterArgs),
    /// Sample hurricane speeds and list the probable line-failure configurations.
    Hurricane(HurricaneArgs),
    /// Run the co-planning model and write the reports.
    Plan(PlanArgs),
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    system: PathBuf,
    #[arg(long)]
    timeseries: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[arg(long)]
    timeseries: PathBuf,
    #[arg(long, default_value_t = 120)]
    days: usize,
    #[arg(long, default_value_t = 96)]
    hours: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also print the error criterion for each of these hour counts.
    #[arg(long, value_delimiter = ',')]
    sweep: Vec<usize>,
}

#[derive(Debug, Args)]
struct HurricaneArgs {
    #[arg(long)]
    system: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Monte Carlo samples (overrides the config).
    #[arg(long)]
    samples: Option<usize>,
    /// Speed scenarios kept after reduction (overrides the config).
    #[arg(long)]
    scenarios: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Candidate lines taken as built, comma separated.
    #[arg(long, value_delimiter = ',')]
    build: Vec<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[arg(long)]
    system: PathBuf,
    /// Hourly load/wind year, clustered before planning.
    #[arg(long, conflicts_with = "reps", required_unless_present = "reps")]
    timeseries: Option<PathBuf>,
    /// Representative hours written by `cluster`, used as is.
    #[arg(long)]
    reps: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    no_hvdc: bool,
    #[arg(long)]
    no_bes: bool,
    #[arg(long)]
    no_resilience: bool,
    /// Also write the intact-system model in LP format.
    #[arg(long)]
    dump_lp: bool,
}

/// Parses `argv` and runs the command. Returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let result = match cli.command {
        Command::Validate(a) => validate(&a).map(|_| EXIT_OK),
        Command::Cluster(a) => cluster(&a).map(|_| EXIT_OK),
        Command::Hurricane(a) => hurricane(&a).map(|_| EXIT_OK),
        Command::Plan(a) => plan(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn load_system(path: &Path) -> Result<PowerSystem> {
    PowerSystem::load(path).with_context(|| format!("loading system {}", path.display()))
}

fn load_series(path: &Path) -> Result<HourlySeries> {
    HourlySeries::load_csv(path).with_context(|| format!("loading time series {}", path.display()))
}

fn validate(a: &ValidateArgs) -> Result<()> {
    let sys = load_system(&a.system)?;
    let cfg = RunConfig::load_or_default(a.config.as_deref())?;
    let count = |k| sys.lines_of(k).count();
    println!("system: {} buses, {} generators, {} stages", sys.buses.len(), sys.generators.len(), sys.config.stages);
    println!(
        "lines: {} existing, {} HVAC candidates, {} HVDC candidates, {} in the hurricane zone",
        count(gridplan::LineKind::Existing),
        count(gridplan::LineKind::CandidateAc),
        count(gridplan::LineKind::CandidateDc),
        sys.lines.iter().filter(|l| l.in_hurricane_zone).count()
    );
    println!(
        "candidates: {} wind buses, {} storage buses",
        sys.buses.iter().filter(|b| b.is_wf_candidate).count(),
        sys.buses.iter().filter(|b| b.is_bes_candidate).count()
    );
    let one_hour = RepresentativeSet::from_hours(
        vec![gridplan::RepresentativeHour { load: 1.0, wind: 0.5, weight: 8760.0 }],
        "validate",
    );
    let model = build_model(&sys, &one_hour, &FailureScenario::intact(), ShedMode::Standard)?;
    println!(
        "model per representative hour: {} variables ({} binaries), {} rows",
        model.num_vars(),
        model.binaries().len(),
        model.rows.len()
    );
    if let Some(ts) = &a.timeseries {
        let series = load_series(ts)?;
        println!("time series: {} hours ({} days)", series.len(), series.days());
        if cfg.days > series.days() || cfg.hours > cfg.days * 24 {
            bail!("config asks for {} days and {} hours from {} days of data", cfg.days, cfg.hours, series.days());
        }
    }
    println!("ok");
    Ok(())
}

fn cluster(a: &ClusterArgs) -> Result<()> {
    let series = load_series(&a.timeseries)?;
    let reps = ctpc(&series, a.days, a.hours)?;
    let file = fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    reps.write_csv(file)?;
    let ec = error_criterion(&series, &reps)?;
    println!(
        "{} representative hours from {} days (total weight {}); EC load {:.6} p.u., wind {:.6} p.u.",
        reps.len(),
        a.days,
        reps.total_weight(),
        ec.load,
        ec.wind
    );
    for &h in &a.sweep {
        let r = ctpc(&series, a.days, h)?;
        let ec = error_criterion(&series, &r)?;
        println!("H = {h:>5}: EC load {:.6}, wind {:.6}", ec.load, ec.wind);
    }
    Ok(())
}

#[derive(Serialize)]
struct SpeedReport {
    speed: f64,
    probability: f64,
    vulnerable: Vec<gridplan::hurricane::VulnerableLine>,
}

#[derive(Serialize)]
struct HurricaneReport {
    seed: u64,
    built: Vec<u32>,
    speeds: Vec<SpeedReport>,
    failures: Vec<FailureScenario>,
}

fn hurricane(a: &HurricaneArgs) -> Result<()> {
    let sys = load_system(&a.system)?;
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    if let Some(n) = a.samples {
        cfg.hurricane.samples = n;
    }
    if let Some(k) = a.scenarios {
        cfg.hurricane.scenarios = k;
    }
    let seed = a.seed.unwrap_or(cfg.seed);
    let built: BTreeSet<u32> = a.build.iter().copied().collect();
    for id in &built {
        match sys.line(*id) {
            Some(l) if l.kind.is_candidate() => {}
            Some(_) => bail!("line {id} is not a candidate"),
            None => bail!("unknown line {id}"),
        }
    }
    let h = &cfg.hurricane;
    let speeds = h.speed_scenarios(seed)?;
    let failures = h.probable_failures(&sys, &built, &speeds)?;
    let report = HurricaneReport {
        seed,
        built: built.iter().copied().collect(),
        speeds: speeds
            .iter()
            .map(|s| SpeedReport {
                speed: s.speed,
                probability: s.probability,
                vulnerable: select_vulnerable_lines(&sys, &built, s.speed, &h.line_curve, &h.tower_curve, h.failure_threshold),
            })
            .collect(),
        failures,
    };
    fs::write(&a.out, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "{} speed scenarios, {} probable failure configurations written to {}",
        report.speeds.len(),
        report.failures.len(),
        a.out.display()
    );
    Ok(())
}

fn plan(a: &PlanArgs) -> Result<i32> {
    let mut sys = load_system(&a.system)?;
    let cfg = RunConfig::load_or_default(a.config.as_deref())?;
    if a.no_hvdc || !cfg.hvdc {
        sys = sys.without_hvdc_candidates()?;
    }
    if a.no_bes || !cfg.bes {
        sys = sys.without_bes_candidates()?;
    }
    let reps = match (&a.timeseries, &a.reps) {
        (Some(ts), _) => {
            let series = load_series(ts)?;
            ctpc(&series, cfg.days, cfg.hours)?
        }
        (None, Some(path)) => {
            let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            RepresentativeSet::from_csv_reader(file, path.display().to_string())?
        }
        (None, None) => bail!("either --timeseries or --reps is required"),
    };
    let eps = a.eps.or(cfg.eps).unwrap_or(sys.config.benders_eps);
    if eps.is_nan() || eps <= 0.0 {
        bail!("--eps must be positive");
    }
    let opts = BendersOptions {
        eps,
        max_iterations: cfg.max_iterations,
        multi_cut: cfg.multi_cut,
        route: cfg.route,
        threads: None,
    };
    let resilience = (!a.no_resilience && cfg.resilience).then(|| ResilienceOptions {
        hurricane: cfg.hurricane.clone(),
        seed: a.seed.unwrap_or(cfg.seed),
    });
    log::info!(
        "planning over {} representative hours, {} stages, threads from {}",
        reps.len(),
        sys.config.stages,
        THREADS_ENV
    );
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    if a.dump_lp {
        let model = build_model(&sys, &reps, &FailureScenario::intact(), ShedMode::Standard)?;
        let path = a.out.join("model.lp");
        let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        model.write_lp(std::io::BufWriter::new(file))?;
    }
    let outcome = run_planning(&sys, &reps, &opts, resilience.as_ref())?;
    let weights: Vec<f64> = reps.hours.iter().map(|h| h.weight).collect();
    let report = render_report(&sys, &outcome, &weights);
    report.write_all(&a.out)?;
    print!("{}", report.plan_text());
    Ok(match outcome.status {
        PlanStatus::Converged => EXIT_OK,
        PlanStatus::IterationLimit => {
            eprintln!(
                "warning: stopped after {} iterations with gap {:.3e} (tolerance {eps:e}); reports hold the best plan found",
                outcome.iterations.len(),
                outcome.gap()
            );
            EXIT_NOT_CONVERGED
        }
    })
}
