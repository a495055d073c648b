//! `fxtqp` command-line front end.
//!
//! Exit codes: 0 success, 1 I/O error, 2 configuration error, 3 solver
//! failure or non-finite state, 4 safety, deadline or bound failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use fxtqp::fxts::{BoundCheck, BoundGrid};
use fxtqp::scenarios::{ConfigError, Scenario, ScenarioConfig, ScenarioId};
use fxtqp::simulator::{monitor, write_trace_csv, MonitorStats, Outcome, Trace};

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_FAILURE: u8 = 4;

#[derive(Parser)]
#[command(name = "fxtqp", version, about = "Fixed-time safe QP control: scenario runs, sweeps and bound checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop scenario and write trace.csv and summary.json.
    Run(RunArgs),
    /// Run one scenario per value of a single field.
    Sweep(SweepArgs),
    /// Compare RK4 hitting times with the analytic settling-time bounds.
    VerifyBounds(VerifyArgs),
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// acc, two-robot, or synthetic:<integrator-1d|integrator-2d-obstacle|fully-actuated-2d>
    #[arg(long, default_value = "acc")]
    scenario: String,
    /// JSON object of field overrides, applied before --set.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Field override `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Integration step; overrides the scenario default.
    #[arg(long)]
    dt: Option<f64>,
    /// Output directory.
    #[arg(long, env = "FXTQP_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// `key=v1,v2,...`; an empty list is a no-op.
    #[arg(long, value_name = "KEY=V1,V2,...")]
    sweep: String,
    /// Parallel sub-runs (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// JSON file with a bound grid; the built-in grid is used otherwise.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "FXTQP_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Io(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl CliError {
    fn report(&self) -> ExitCode {
        match self {
            CliError::Config(m) => {
                eprintln!("config error: {m}");
                ExitCode::from(EXIT_CONFIG)
            }
            CliError::Io(m) => {
                eprintln!("i/o error: {m}");
                ExitCode::from(EXIT_IO)
            }
        }
    }
}

/// Prints a line to stdout; a closed pipe is not an error worth dying over.
fn emit(line: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Contents of summary.json.
#[derive(Debug, Serialize)]
struct Summary {
    scenario: String,
    config: serde_json::Value,
    dt: f64,
    outcome: Outcome,
    success: bool,
    deadlines: Vec<f64>,
    branch_names: Vec<String>,
    discretization_warnings: usize,
    #[serde(flatten)]
    stats: MonitorStats,
}

fn exit_code(outcome: &Outcome) -> u8 {
    match outcome {
        Outcome::AllPhasesMet => 0,
        Outcome::SolverFailure { .. } | Outcome::NonFinite { .. } => EXIT_SOLVER,
        Outcome::DeadlineMissed { .. } | Outcome::SafetyViolated { .. } => EXIT_FAILURE,
    }
}

fn parse_kv(s: &str) -> Result<(&str, &str), CliError> {
    s.split_once('=')
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| CliError::Config(format!("expected KEY=VALUE, got {s:?}")))
}

fn load_config(args: &ScenarioArgs) -> Result<(ScenarioId, ScenarioConfig), CliError> {
    let id: ScenarioId = args.scenario.parse()?;
    let mut cfg = ScenarioConfig::default_for(&id);
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let obj = value
            .as_object()
            .ok_or_else(|| CliError::Config(format!("{}: expected a JSON object", path.display())))?;
        cfg.merge_json(obj)?;
    }
    for s in &args.sets {
        let (k, v) = parse_kv(s)?;
        cfg.set(k, v)?;
    }
    if let Some(dt) = args.dt {
        cfg.set("dt", &dt.to_string())?;
    }
    Ok((id, cfg))
}

/// Runs a configured scenario and writes its outputs under `dir`.
fn run_one(cfg: &ScenarioConfig, dir: &Path) -> Result<Summary, CliError> {
    let scenario: Scenario = cfg.build()?;
    let trace: Trace = scenario.run().map_err(|e| CliError::Config(e.to_string()))?;
    let stats = monitor(&trace.records, scenario.separation.as_ref());
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let trace_path = dir.join("trace.csv");
    let file = fs::File::create(&trace_path).map_err(|e| io_err(&trace_path, e))?;
    write_trace_csv(&trace.records, std::io::BufWriter::new(file)).map_err(|e| io_err(&trace_path, e))?;
    let summary = Summary {
        scenario: trace.meta.scenario.clone(),
        config: cfg.to_json(),
        dt: trace.meta.dt,
        success: trace.meta.outcome.is_success(),
        outcome: trace.meta.outcome.clone(),
        deadlines: trace.meta.deadlines.clone(),
        branch_names: trace.meta.branch_names.clone(),
        discretization_warnings: trace.meta.discretization_warnings,
        stats,
    };
    let summary_path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&summary_path, text + "\n").map_err(|e| io_err(&summary_path, e))?;
    Ok(summary)
}

fn cmd_run(args: &RunArgs) -> Result<u8, CliError> {
    let (_, cfg) = load_config(&args.scenario)?;
    let summary = run_one(&cfg, &args.scenario.out)?;
    emit(&serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(exit_code(&summary.outcome))
}

fn join(values: impl IntoIterator<Item = Option<f64>>) -> String {
    values
        .into_iter()
        .map(|v| v.map_or_else(String::new, |v| v.to_string()))
        .collect::<Vec<_>>()
        .join(";")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn cmd_sweep(args: &SweepArgs) -> Result<u8, CliError> {
    let (key, list) = parse_kv(&args.sweep)?;
    let values: Vec<&str> = list.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    let (_, base) = load_config(&args.scenario)?;
    // Reject bad values before anything runs.
    let configs = values
        .iter()
        .map(|v| {
            let mut cfg = base.clone();
            cfg.set(key, v)?;
            cfg.build()?;
            Ok((v.to_string(), cfg))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let out = &args.scenario.out;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let results: Vec<Result<Summary, CliError>> = pool.install(|| {
        configs
            .par_iter()
            .map(|(v, cfg)| run_one(cfg, &out.join(format!("{key}={v}"))))
            .collect()
    });

    let agg_path = out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&agg_path).map_err(|e| io_err(&agg_path, e))?;
    w.write_record([key, "outcome", "success", "steps", "max_h_s", "min_separation", "max_delta1", "reach_times", "max_abs_u"])
        .map_err(|e| io_err(&agg_path, e))?;
    let mut code = 0;
    for ((v, _), res) in configs.iter().zip(results) {
        let s = res?;
        let c = exit_code(&s.outcome);
        code = match (code, c) {
            (EXIT_SOLVER, _) | (_, EXIT_SOLVER) => EXIT_SOLVER,
            (a, b) => a.max(b),
        };
        let outcome = serde_json::to_value(&s.outcome).expect("outcome serializes");
        w.write_record([
            v.clone(),
            outcome["kind"].as_str().unwrap_or_default().to_string(),
            s.success.to_string(),
            s.stats.steps.to_string(),
            opt(s.stats.max_h_s),
            opt(s.stats.min_separation),
            opt(s.stats.max_delta1),
            join(s.stats.reach_times.iter().map(|t| Some(*t))),
            join(s.stats.max_abs_u.iter().copied()),
        ])
        .map_err(|e| io_err(&agg_path, e))?;
        emit(&format!("{key}={v}: {}", outcome["kind"].as_str().unwrap_or_default()));
    }
    w.flush().map_err(|e| io_err(&agg_path, e))?;
    Ok(code)
}

fn cmd_verify_bounds(args: &VerifyArgs) -> Result<u8, CliError> {
    let grid: BoundGrid = match &args.grid {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => BoundGrid::default(),
    };
    if !(grid.dt > 0.0 && grid.k > 0.0 && grid.k < 1.0) {
        return Err(CliError::Config("grid needs dt > 0 and 0 < k < 1".into()));
    }
    let rows: Vec<BoundCheck> = grid
        .points()
        .into_par_iter()
        .map(|p| grid.check_point(p))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(e.to_string()))?;

    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let path = args.out.join("bounds.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    for r in &rows {
        w.serialize(r).map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;

    emit(&format!("{:>6} {:>6} {:>4} {:>6} {:>8} {:>12} {:>12} {:<24} {}", "a1", "a2", "mu", "d1", "V0", "bound", "hit", "regime", "result"));
    for r in &rows {
        let hit = r.hit_time.map_or_else(|| "never".to_string(), |t| format!("{t:.6}"));
        let result = match (r.in_domain, r.pass) {
            (false, _) => "out-of-domain",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        };
        emit(&format!(
            "{:>6} {:>6} {:>4} {:>6} {:>8} {:>12.6} {:>12} {:<24} {}",
            r.alpha1, r.alpha2, r.mu, r.delta1, r.v0, r.bound, hit, r.regime, result
        ));
    }
    let in_domain = rows.iter().filter(|r| r.in_domain).count();
    let failed = rows.iter().filter(|r| !r.pass).count();
    emit(&format!("{in_domain} in-domain points, {failed} failures"));
    Ok(if failed == 0 { 0 } else { EXIT_FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::VerifyBounds(a) => cmd_verify_bounds(a),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => e.report(),
    }
}
