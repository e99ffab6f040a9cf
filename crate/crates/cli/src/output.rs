//! Artifact formats and atomic writes.

use std::io::Write;
use std::path::{Path, PathBuf};

use gvg_coverage::balance::{self, BalanceTrace, CellLoad, Phase};
use gvg_coverage::sim::{SimPhase, SimTrace, WorldSpec};
use gvg_coverage::GvgGraph;
use serde::{Deserialize, Serialize};

pub const GVG_JSON: &str = "gvg.json";
pub const BALANCE_TRACE: &str = "balance_trace.csv";
pub const BALANCE_SUMMARY: &str = "balance_summary.json";
pub const ROBOTS_CSV: &str = "robots.csv";
pub const COST_CSV: &str = "cost.csv";
pub const RUN_SUMMARY: &str = "run_summary.json";

/// Files rendered in memory, written together once everything has been computed.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(&'static str, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: &'static str, bytes: Vec<u8>) {
        self.files.push((name, bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &'static str, value: &T) -> serde_json::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    /// Writes every file through a temporary in `dir` followed by a rename, so a reader never
    /// sees a half-written artifact.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>, (PathBuf, std::io::Error)> {
        std::fs::create_dir_all(dir).map_err(|e| (dir.to_path_buf(), e))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, bytes) in self.files {
            let path = dir.join(name);
            let mut tmp = temp_builder().tempfile_in(dir).map_err(|e| (path.clone(), e))?;
            tmp.write_all(&bytes).and_then(|_| tmp.as_file().sync_all()).map_err(|e| (path.clone(), e))?;
            tmp.persist(&path).map_err(|e| (path.clone(), e.error))?;
            written.push(path);
        }
        Ok(written)
    }
}

// Temporaries default to 0600; artifacts should be readable like any other output file.
#[cfg(unix)]
fn temp_builder() -> tempfile::Builder<'static, 'static> {
    use std::os::unix::fs::PermissionsExt;
    let mut b = tempfile::Builder::new();
    b.permissions(std::fs::Permissions::from_mode(0o644));
    b
}

#[cfg(not(unix))]
fn temp_builder() -> tempfile::Builder<'static, 'static> {
    tempfile::Builder::new()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GvgDump {
    pub world: WorldSpec,
    pub graph: GvgGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub round: usize,
    pub phase: String,
    pub cell_id: usize,
    #[serde(rename = "K")]
    pub k: i64,
    pub x: f64,
    pub c: Option<i64>,
    pub offers_sent: usize,
    pub transfers: usize,
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Initial => "initial",
        Phase::Averaging => "averaging",
        Phase::Integer => "integer",
    }
}

pub fn balance_trace_csv(trace: &BalanceTrace) -> csv::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &trace.rounds {
        for c in &r.cells {
            w.serialize(BalanceRow {
                round: r.round,
                phase: phase_name(r.phase).to_string(),
                cell_id: c.cell_id,
                k: c.k,
                x: c.x,
                c: c.c,
                offers_sent: c.offers_sent,
                transfers: c.transfers,
            })?;
        }
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceSummary {
    pub cells: usize,
    pub seed: u64,
    pub t1: usize,
    pub t2: usize,
    pub guard_min_robots: bool,
    pub mass_weighted: bool,
    pub k_initial: Vec<i64>,
    pub k_star: Vec<f64>,
    pub k_final: Vec<i64>,
    pub c: Vec<i64>,
    pub c_bar: f64,
    pub alpha: usize,
    pub beta: usize,
    pub eq3_ok: bool,
    pub s1: f64,
    pub s2: f64,
    pub s_p: f64,
    pub s_f: f64,
    /// Eq. 3 holds and `s_p <= s_f < s_p + s2`.
    pub theorem2_ok: bool,
    /// Every final count is the floor or ceiling of its ideal count.
    pub envelope_ok: bool,
    /// Passes skipped by the minimum-robot guard.
    pub guarded: usize,
}

/// Floor with the same snapping to nearby integers as the balancing code.
pub fn floor_of(v: f64) -> i64 {
    (v - balance::fractional(v)).round() as i64
}

/// Recomputes every terminal statistic from the count vectors alone.
pub fn summarize(
    k_initial: &[i64],
    k_star: &[f64],
    k_final: &[i64],
    cfg: &gvg_coverage::BalanceConfig,
    guarded: usize,
) -> BalanceSummary {
    let dev = balance::deviation_vector(k_final, k_star);
    let eq3 = balance::check_eq3(&dev.c);
    let total: i64 = k_final.iter().sum();
    let ideal_c = balance::ideal_configuration(k_star, total);
    let ideal_k: Vec<i64> = k_star.iter().zip(&ideal_c).map(|(&ks, &c)| floor_of(ks) + c).collect();
    let s1: f64 = k_star.iter().map(|&v| balance::fractional(v)).sum();
    let s2 = (k_star.len() as f64 - s1).min(s1);
    let (s_p, s_f, holds) = match balance::verify_theorem2(k_final, k_star) {
        Ok(r) => (r.s_p, r.s_f, r.holds),
        Err(_) => (balance::balance_objective(&ideal_k, k_star), balance::balance_objective(k_final, k_star), false),
    };
    let envelope_ok = k_final.iter().zip(k_star).all(|(&k, &ks)| {
        let f = floor_of(ks);
        k == f || (balance::fractional(ks) > 0.0 && k == f + 1)
    });
    BalanceSummary {
        cells: k_final.len(),
        seed: cfg.seed,
        t1: cfg.t1,
        t2: cfg.t2,
        guard_min_robots: cfg.guard_min_robots,
        mass_weighted: cfg.mass_weighted,
        k_initial: k_initial.to_vec(),
        k_star: k_star.to_vec(),
        k_final: k_final.to_vec(),
        c: dev.c,
        c_bar: dev.c_bar,
        alpha: eq3.alpha,
        beta: eq3.beta,
        eq3_ok: eq3.ok,
        s1,
        s2,
        s_p,
        s_f,
        theorem2_ok: eq3.ok && holds,
        envelope_ok,
        guarded,
    }
}

pub fn summarize_trace(
    initial: &[CellLoad],
    fin: &[CellLoad],
    trace: &BalanceTrace,
    cfg: &gvg_coverage::BalanceConfig,
) -> BalanceSummary {
    let k_initial: Vec<i64> = initial.iter().map(|l| l.k).collect();
    let k_star: Vec<f64> = fin.iter().map(|l| l.k_star).collect();
    let k_final: Vec<i64> = fin.iter().map(|l| l.k).collect();
    let guarded = trace.rounds.iter().map(|r| r.guarded.len()).sum();
    summarize(&k_initial, &k_star, &k_final, cfg, guarded)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotRow {
    pub step: usize,
    pub time: f64,
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub cell: usize,
    pub s: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub step: usize,
    pub time: f64,
    #[serde(rename = "H_scaled")]
    pub h_scaled: f64,
    /// `balanced` marks the state right after load balancing; coverage rows follow it.
    pub phase: String,
}

/// `robots.csv` with every `every`-th step plus the last one.
pub fn robots_csv(trace: &SimTrace, every: usize) -> csv::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let last = trace.steps.len().saturating_sub(1);
    for (k, rec) in trace.steps.iter().enumerate() {
        if k % every.max(1) != 0 && k != last {
            continue;
        }
        for r in &rec.robots {
            w.serialize(RobotRow {
                step: rec.step,
                time: rec.time,
                id: r.id,
                x: r.position.x,
                y: r.position.y,
                cell: r.cell,
                s: r.s,
                delta: r.delta,
            })?;
        }
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn cost_csv(trace: &SimTrace) -> csv::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for rec in &trace.steps {
        let phase = match rec.phase {
            SimPhase::Balanced => "balanced",
            SimPhase::Coverage => "coverage",
        };
        w.serialize(CostRow { step: rec.step, time: rec.time, h_scaled: rec.cost, phase: phase.to_string() })?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub robots: usize,
    pub cells: usize,
    pub steps: usize,
    pub dt: f64,
    pub k_g: f64,
    pub report_scale: f64,
    pub h_balanced: f64,
    pub h_final: f64,
    /// Largest control input after the last step.
    pub stationarity: f64,
    pub counts: Vec<i64>,
}
