//! Experiment runner: model comparison, defender-count trade-off sweeps and
//! the command-line interface.

use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bernstein::ControlPoints;
use crate::error::{Error, Result};
use crate::montecarlo::{self, MCStats};
use crate::ocp::{self, ModelKind};
use crate::optimizer::{self, GradientMode, InitStrategy, OptimizerOptions, TraceSummary};
use crate::scenario::{self, ScenarioConfig};

/// Range advantage of 10% in distance; sigma divides a squared distance.
pub const RANGE_ADVANTAGE_SIGMA: f64 = 1.1 * 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeaponConfig {
    /// Attackers outrange defenders.
    #[serde(rename = "A-type")]
    AType,
    /// Defenders outrange attackers.
    #[serde(rename = "B-type")]
    BType,
    #[serde(rename = "symmetric")]
    Symmetric,
}

impl WeaponConfig {
    /// Copy of `base` with the range advantage applied.
    pub fn apply(self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut cfg = base.clone();
        match self {
            Self::AType => cfg.sigma_a *= RANGE_ADVANTAGE_SIGMA,
            Self::BType => cfg.sigma_d *= RANGE_ADVANTAGE_SIGMA,
            Self::Symmetric => {}
        }
        cfg
    }
}

impl fmt::Display for WeaponConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AType => "A-type",
            Self::BType => "B-type",
            Self::Symmetric => "symmetric",
        })
    }
}

impl FromStr for WeaponConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "a-type" => Ok(Self::AType),
            "b" | "b-type" => Ok(Self::BType),
            "symmetric" | "sym" => Ok(Self::Symmetric),
            other => Err(Error::Config(format!("unknown weapon config `{other}`"))),
        }
    }
}

/// Survival series predicted by one deterministic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSeries {
    pub model: ModelKind,
    pub q0: Vec<f64>,
    pub mean_attacker_q: Vec<f64>,
    pub mean_defender_q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub times: Vec<f64>,
    /// P1, P2, P3 in that order.
    pub models: Vec<ModelSeries>,
    pub mc: MCStats,
}

impl ComparisonReport {
    pub fn series(&self, model: ModelKind) -> &ModelSeries {
        self.models.iter().find(|s| s.model == model).expect("every model is present")
    }

    /// Columns: `t, q0_p1, q0_p2, q0_p3, q0_mc_mean, q0_mc_halfwidth,
    /// attQ_p1, attQ_p2, attQ_p3, attQ_mc, defQ_p1, defQ_p2, defQ_p3, defQ_mc`.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["t".to_string()];
        header.extend(self.models.iter().map(|s| format!("q0_{}", s.model)));
        header.extend(["q0_mc_mean".to_string(), "q0_mc_halfwidth".to_string()]);
        header.extend(self.models.iter().map(|s| format!("attQ_{}", s.model)));
        header.push("attQ_mc".into());
        header.extend(self.models.iter().map(|s| format!("defQ_{}", s.model)));
        header.push("defQ_mc".into());
        w.write_record(&header)?;
        for k in 0..self.times.len() {
            let mut row = vec![self.times[k].to_string()];
            row.extend(self.models.iter().map(|s| s.q0[k].to_string()));
            row.push(self.mc.hvu_survival[k].to_string());
            row.push(self.mc.hvu_halfwidth[k].to_string());
            row.extend(self.models.iter().map(|s| s.mean_attacker_q[k].to_string()));
            row.push(self.mc.attacker_alive[k].to_string());
            row.extend(self.models.iter().map(|s| s.mean_defender_q[k].to_string()));
            row.push(self.mc.defender_alive[k].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Propagates P1, P2 and P3 on `cp` and validates against an MC ensemble.
pub fn run_comparison(
    cfg: &ScenarioConfig,
    cp: &ControlPoints,
    n_runs: usize,
    base_seed: u64,
) -> Result<ComparisonReport> {
    if n_runs == 0 {
        return Err(Error::Config("n_runs must be >= 1".into()));
    }
    let mut models = Vec::with_capacity(3);
    for model in ModelKind::ALL {
        let r = ocp::propagate(model, cfg, cp)?;
        models.push(ModelSeries {
            model,
            q0: r.q_series.iter().map(|q| q.q_hvu).collect(),
            mean_attacker_q: r.q_series.iter().map(|q| q.mean_attacker()).collect(),
            mean_defender_q: r.q_series.iter().map(|q| q.mean_defender()).collect(),
        });
    }
    let mc = montecarlo::mc_ensemble(cfg, cp, n_runs, base_seed)?;
    Ok(ComparisonReport { times: cfg.time_grid(), models, mc })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub model: ModelKind,
    pub n_defenders: usize,
    pub weapon_config: WeaponConfig,
    /// Optimized cost; NaN when the row failed.
    pub cost: f64,
    pub evaluations: usize,
    pub seconds: f64,
    pub feasible: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffOptions {
    pub optimizer: OptimizerOptions,
    /// Defenders are placed uniformly in a ball of this radius about the HVU.
    pub defender_radius: f64,
    pub placement_seed: u64,
}

impl TradeoffOptions {
    pub fn for_scenario(cfg: &ScenarioConfig) -> Self {
        Self { optimizer: OptimizerOptions::default(), defender_radius: cfg.s0, placement_seed: cfg.rng_seed }
    }
}

/// The scenario used for one sweep row: `m` freshly placed defenders.
pub fn sweep_scenario(
    base: &ScenarioConfig,
    m: usize,
    weapon: WeaponConfig,
    opts: &TradeoffOptions,
) -> Result<ScenarioConfig> {
    let mut cfg = weapon.apply(base);
    cfg.n_defenders = m;
    cfg.initial_defenders =
        scenario::default_initializer(m, opts.defender_radius, cfg.hvu_position, 1.5 * cfg.d_min, opts.placement_seed)?;
    cfg.validate()?;
    Ok(cfg)
}

fn sweep_row(
    base: &ScenarioConfig,
    model: ModelKind,
    m: usize,
    weapon: WeaponConfig,
    opts: &TradeoffOptions,
) -> TradeoffRow {
    let start = Instant::now();
    let outcome = sweep_scenario(base, m, weapon, opts).and_then(|cfg| {
        let init = optimizer::initialize_control_points(&cfg, InitStrategy::RadialPicket);
        optimizer::optimize(model, &cfg, &init, &opts.optimizer)
    });
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok(trace) => TradeoffRow {
            model,
            n_defenders: m,
            weapon_config: weapon,
            cost: trace.best().cost,
            evaluations: trace.evaluations,
            seconds,
            feasible: trace.feasible(),
            error: None,
        },
        Err(e) => TradeoffRow {
            model,
            n_defenders: m,
            weapon_config: weapon,
            cost: f64::NAN,
            evaluations: 0,
            seconds,
            feasible: false,
            error: Some(e.to_string()),
        },
    }
}

/// Optimizes one scenario per defender count; rows come back in input order.
pub fn tradeoff_sweep(
    base: &ScenarioConfig,
    model: ModelKind,
    m_values: &[usize],
    weapon: WeaponConfig,
    opts: &TradeoffOptions,
) -> Result<Vec<TradeoffRow>> {
    if m_values.is_empty() {
        return Err(Error::Config("m_values must be non-empty".into()));
    }
    opts.optimizer.validate()?;
    Ok(m_values.iter().map(|&m| sweep_row(base, model, m, weapon, opts)).collect())
}

/// Columns: `model, M, weapon_config, J, evals, seconds, feasible, error`.
pub fn write_tradeoff_csv<W: Write>(rows: &[TradeoffRow], sink: W, with_time: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["model", "M", "weapon_config", "J", "evals", "seconds", "feasible", "error"])?;
    for r in rows {
        let seconds = if with_time { r.seconds } else { 0.0 };
        w.write_record([
            r.model.to_string(),
            r.n_defenders.to_string(),
            r.weapon_config.to_string(),
            r.cost.to_string(),
            r.evaluations.to_string(),
            seconds.to_string(),
            r.feasible.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `a:b` (inclusive) or a comma list such as `1,2,4`.
pub fn parse_counts(list: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("bad defender count list `{list}`"));
    let values: Vec<usize> = if let Some((a, b)) = list.split_once(':') {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        list.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if values.is_empty() || values.contains(&0) {
        return Err(bad());
    }
    Ok(values)
}

#[derive(Parser, Debug)]
#[command(
    name = "swarm-attrition",
    version,
    about = "Swarm engagement simulation, optimization and Monte Carlo validation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Propagate one model and write the per-step series as CSV.
    Simulate {
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Append per-agent positions to each row.
        #[arg(long)]
        positions: bool,
    },
    /// Optimize defender control points under one model.
    Optimize {
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        scenario: PathBuf,
        /// Control points written here.
        #[arg(long)]
        out: PathBuf,
        /// Iterate summary written here as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Start from these control points instead of an initialization strategy.
        #[arg(long, conflicts_with = "init")]
        trajectories: Option<PathBuf>,
        #[arg(long, default_value = "radial-picket")]
        init: InitStrategy,
        #[command(flatten)]
        opt: OptArgs,
    },
    /// Run a Monte Carlo ensemble on fixed trajectories.
    Montecarlo {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long, default_value_t = 200)]
        runs: usize,
        #[arg(long)]
        seed: u64,
        /// Per-step statistics CSV.
        #[arg(long)]
        out: PathBuf,
        /// Final-time summary JSON.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Compare P1, P2, P3 against a Monte Carlo ensemble.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long, default_value_t = 200)]
        runs: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Optimized cost against the number of defenders.
    Tradeoff {
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        scenario: PathBuf,
        /// Inclusive range `a:b` or list `1,2,4`.
        #[arg(long)]
        defenders: String,
        #[arg(long, default_value = "symmetric")]
        weapon: WeaponConfig,
        /// Radius of the defender placement ball (defaults to s0).
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Record wall-clock seconds (makes the output run-dependent).
        #[arg(long)]
        wall_time: bool,
        #[command(flatten)]
        opt: OptArgs,
    },
}

#[derive(Args, Debug)]
struct OptArgs {
    #[arg(long, default_value = "finite-difference")]
    mode: GradientMode,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    /// Seeds stochastic search and defender placement.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl OptArgs {
    fn options(&self) -> OptimizerOptions {
        OptimizerOptions {
            max_iterations: self.max_iterations,
            gradient_mode: self.mode,
            step_seed: self.seed,
            ..Default::default()
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load_cp(path: &Path) -> Result<ControlPoints> {
    ControlPoints::from_json(std::io::BufReader::new(File::open(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { model, scenario, trajectories, out, positions } => {
            let cfg = scenario::load_scenario_file(&scenario)?;
            let cp = load_cp(&trajectories)?;
            let result = ocp::propagate(model, &cfg, &cp)?;
            ocp::write_csv(&result, create(&out)?, positions)
        }
        Command::Optimize { model, scenario, out, trace, trajectories, init, opt } => {
            let cfg = scenario::load_scenario_file(&scenario)?;
            let start = match trajectories {
                Some(p) => load_cp(&p)?,
                None => optimizer::initialize_control_points(&cfg, init),
            };
            let result = optimizer::optimize(model, &cfg, &start, &opt.options())?;
            let mut w = create(&out)?;
            result.best_cp.to_json(&mut w)?;
            w.flush()?;
            if let Some(p) = trace {
                write_json(&p, &TraceSummary::from(&result))?;
            }
            Ok(())
        }
        Command::Montecarlo { scenario, trajectories, runs, seed, out, summary } => {
            if runs == 0 {
                return Err(Error::Config("--runs must be >= 1".into()));
            }
            let cfg = scenario::load_scenario_file(&scenario)?;
            let cp = load_cp(&trajectories)?;
            let stats = montecarlo::mc_ensemble(&cfg, &cp, runs, seed)?;
            stats.write_csv(create(&out)?)?;
            if let Some(p) = summary {
                write_json(&p, &stats.summary())?;
            }
            Ok(())
        }
        Command::Compare { scenario, trajectories, runs, seed, out, json } => {
            let cfg = scenario::load_scenario_file(&scenario)?;
            let cp = load_cp(&trajectories)?;
            let report = run_comparison(&cfg, &cp, runs, seed)?;
            report.write_csv(create(&out)?)?;
            if let Some(p) = json {
                write_json(&p, &report)?;
            }
            Ok(())
        }
        Command::Tradeoff { model, scenario, defenders, weapon, radius, out, wall_time, opt } => {
            let cfg = scenario::load_scenario_file(&scenario)?;
            let counts = parse_counts(&defenders)?;
            let mut opts = TradeoffOptions::for_scenario(&cfg);
            opts.optimizer = opt.options();
            opts.placement_seed = opt.seed;
            if let Some(r) = radius {
                opts.defender_radius = r;
            }
            let rows = tradeoff_sweep(&cfg, model, &counts, weapon, &opts)?;
            write_tradeoff_csv(&rows, create(&out)?, wall_time)
        }
    }
}

/// Caps the global worker pool from `SWARM_THREADS` (unset or 0 means automatic).
fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("SWARM_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("SWARM_THREADS must be a non-negative integer, got `{raw}`")))?;
    if n > 0 {
        // Fails only if the pool already exists, in which case it stays as is.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns 0 on success, 1 on runtime failure and 2 on bad usage.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return 0;
            }
            if !e.to_string().contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return 2;
        }
    };
    match configure_threads().and_then(|()| run(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
