//! `gvgcov`: runs the GVG coverage pipeline from a scenario file and dumps its artifacts.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 usage or validation error,
//! 3 computation or I/O failure.

pub mod check;
pub mod output;
pub mod scenario;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gvg_coverage::balance::{self, BalanceError};
use gvg_coverage::sim::{self, SimError};
use log::info;
use thiserror::Error;

use crate::output::{GvgDump, Outputs, RunSummary};
use crate::scenario::{Scenario, ScenarioError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gvgcov", version, about = "GVG-based multi-robot coverage simulator")]
pub struct Cli {
    /// Only log errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract the GVG and its cells; writes gvg.json.
    Gvg(RunArgs),
    /// Load balancing only; writes balance_trace.csv and balance_summary.json.
    Balance(RunArgs),
    /// Full pipeline; writes every artifact.
    Run(RunArgs),
    /// Re-verify the artifacts in a directory.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Overrides the seed in the scenario file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Check(#[from] check::CheckError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("serializing output: {0}")]
    Encode(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(_) | CliError::Input(_) | CliError::Check(_) => EXIT_USAGE,
            CliError::Sim(SimError::BadConfig(_) | SimError::InfeasibleK { .. }) => EXIT_USAGE,
            CliError::Sim(_) | CliError::Balance(_) | CliError::Write { .. } | CliError::Encode(_) => EXIT_COMPUTE,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Encode(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Encode(e.to_string())
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("GVGCOV_LOG")
        .target(env_logger::Target::Stderr)
        .try_init();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(&cli.command, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command, printing its report to `out`; returns the exit code on success.
pub fn execute(command: &Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Gvg(a) => cmd_gvg(&load(a)?, &a.out_dir, out),
        Command::Balance(a) => cmd_balance(&load(a)?, &a.out_dir, out),
        Command::Run(a) => cmd_run(&load(a)?, &a.out_dir, out),
        Command::Check(a) => cmd_check(&a.out_dir, out),
    }
}

fn load(a: &RunArgs) -> Result<Scenario, CliError> {
    let mut s = scenario::load(&a.scenario)?;
    if let Some(seed) = a.seed {
        s.set_seed(seed);
    }
    Ok(s)
}

fn commit(outputs: Outputs, dir: &Path) -> Result<(), CliError> {
    let written = outputs.commit(dir).map_err(|(path, source)| CliError::Write { path, source })?;
    for p in written {
        info!("wrote {}", p.display());
    }
    Ok(())
}

// Reports go to stdout; a closed pipe there is not worth failing over.
macro_rules! report {
    ($out:expr, $($arg:tt)*) => {
        let _ = writeln!($out, $($arg)*);
    };
}

fn sim_config(s: &Scenario, what: &str) -> Result<sim::ScenarioConfig, CliError> {
    s.sim.clone().ok_or_else(|| CliError::Input(format!("{what} needs [world], [density] and [robots] sections")))
}

pub fn cmd_gvg(s: &Scenario, out_dir: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = sim_config(s, "gvg")?;
    let (_, graph) = sim::build_environment(&cfg)?;
    let mut files = Outputs::default();
    files.add_json(output::GVG_JSON, &GvgDump { world: cfg.world.clone(), graph: graph.clone() })?;
    commit(files, out_dir)?;
    report!(out, "cells: {}", graph.cells.len());
    report!(out, "nodes: {}", graph.nodes.len());
    report!(out, "total mass: {}", graph.total_mass + 0.0);
    Ok(EXIT_OK)
}

pub fn cmd_balance(s: &Scenario, out_dir: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut files = Outputs::default();
    let summary = if let Some(cells) = &s.cells {
        let (fin, trace) = balance::balance(&cells.loads, &cells.adjacency, &s.balance)?;
        files.add(output::BALANCE_TRACE, output::balance_trace_csv(&trace)?);
        output::summarize_trace(&cells.loads, &fin, &trace, &s.balance)
    } else {
        let cfg = sim_config(s, "balance")?;
        let (world, graph) = sim::build_environment(&cfg)?;
        let mut state = sim::place_robots(world, graph, &cfg)?;
        let initial = state.loads.clone();
        let trace = sim::run_load_balancing(&mut state, &cfg)?;
        files.add_json(output::GVG_JSON, &GvgDump { world: cfg.world.clone(), graph: state.graph.clone() })?;
        files.add(output::BALANCE_TRACE, output::balance_trace_csv(&trace)?);
        output::summarize_trace(&initial, &state.loads, &trace, &cfg.balance_config())
    };
    files.add_json(output::BALANCE_SUMMARY, &summary)?;
    commit(files, out_dir)?;
    report_balance(&summary, out);
    Ok(EXIT_OK)
}

fn report_balance(s: &output::BalanceSummary, out: &mut dyn Write) {
    report!(out, "cells: {}", s.cells);
    report!(out, "K*: {:?}", s.k_star.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());
    report!(out, "K: {:?}", s.k_final);
    report!(out, "alpha: {}, beta: {}, eq3_ok: {}", s.alpha, s.beta, s.eq3_ok);
    report!(out, "S_p: {:.4}, S_f: {:.4}, S2: {:.4}, theorem2_ok: {}", s.s_p, s.s_f, s.s2, s.theorem2_ok);
}

pub fn cmd_run(s: &Scenario, out_dir: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = sim_config(s, "run")?;
    let (state, trace) = sim::run_with_state(&cfg)?;
    let initial_loads: Vec<_> = trace
        .balance
        .rounds
        .first()
        .map(|r| r.cells.iter().map(|c| balance::CellLoad::new(c.cell_id, c.k, state.loads[c.cell_id].mass)).collect())
        .unwrap_or_default();
    let summary = output::summarize_trace(&initial_loads, &trace.loads, &trace.balance, &cfg.balance_config());
    let first = trace.steps.first().map_or(0.0, |r| r.cost);
    let last = trace.steps.last().map_or(0.0, |r| r.cost);
    let run_summary = RunSummary {
        robots: state.robots.len(),
        cells: state.graph.cells.len(),
        steps: cfg.steps,
        dt: cfg.dt,
        k_g: cfg.k_g,
        report_scale: cfg.report_scale,
        h_balanced: first,
        h_final: last,
        stationarity: trace.final_speed,
        counts: state.counts(),
    };

    let mut files = Outputs::default();
    files.add_json(output::GVG_JSON, &GvgDump { world: cfg.world.clone(), graph: state.graph.clone() })?;
    files.add(output::BALANCE_TRACE, output::balance_trace_csv(&trace.balance)?);
    files.add_json(output::BALANCE_SUMMARY, &summary)?;
    files.add(output::ROBOTS_CSV, output::robots_csv(&trace, s.record_every)?);
    files.add(output::COST_CSV, output::cost_csv(&trace)?);
    files.add_json(output::RUN_SUMMARY, &run_summary)?;
    commit(files, out_dir)?;

    report_balance(&summary, out);
    report!(out, "H after balancing: {first}");
    report!(out, "final H: {last}");
    report!(out, "stationarity max|u|: {:e}", trace.final_speed);
    Ok(EXIT_OK)
}

pub fn cmd_check(dir: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let results = check::check_dir(dir)?;
    for r in &results {
        report!(out, "{}", serde_json::to_string(r)?);
    }
    Ok(if results.iter().all(|r| r.ok) { EXIT_OK } else { EXIT_VERIFY })
}
