//! Re-verification of dumped artifacts.

use std::path::{Path, PathBuf};

use gvg_coverage::balance;
use gvg_coverage::{Vec2, World};
use serde::Serialize;
use thiserror::Error;

use crate::output::{
    BalanceRow, BalanceSummary, CostRow, GvgDump, RobotRow, BALANCE_SUMMARY, BALANCE_TRACE, COST_CSV, GVG_JSON,
    ROBOTS_CSV,
};

/// Samples must be equidistant from their obstacle pair to this absolute tolerance.
pub const EQUIDISTANCE_TOL: f64 = 1e-5;
/// Node radius versus distances to the defining obstacles.
pub const NODE_TOL: f64 = 1e-3;
/// Allowed rise of the scaled cost between consecutive coverage steps.
pub const COST_SLACK: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("{0}: not a directory")]
    NotADirectory(PathBuf),
    #[error("{0}: no artifacts to check")]
    Empty(PathBuf),
    #[error("{path}: {message}")]
    Unreadable { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub check: &'static str,
    pub ok: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(check: &'static str, ok: bool, detail: impl Into<String>) -> Self {
        CheckResult { check, ok, detail: detail.into() }
    }
}

fn unreadable(path: &Path, e: impl std::fmt::Display) -> CheckError {
    CheckError::Unreadable { path: path.to_path_buf(), message: e.to_string() }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CheckError> {
    let text = std::fs::read_to_string(path).map_err(|e| unreadable(path, e))?;
    serde_json::from_str(&text).map_err(|e| unreadable(path, e))
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CheckError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| unreadable(path, e))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(|e| unreadable(path, e))
}

/// Runs every check whose inputs exist in `dir`.
pub fn check_dir(dir: &Path) -> Result<Vec<CheckResult>, CheckError> {
    if !dir.is_dir() {
        return Err(CheckError::NotADirectory(dir.to_path_buf()));
    }
    let has = |name: &str| dir.join(name).is_file();
    let mut out = Vec::new();
    let mut world = None;

    if has(GVG_JSON) {
        let path = dir.join(GVG_JSON);
        let dump: GvgDump = read_json(&path)?;
        let w = dump.world.build().map_err(|e| unreadable(&path, e))?;
        out.push(check_equidistance(&w, &dump));
        out.push(check_node_circles(&w, &dump));
        world = Some(w);
    }
    if has(BALANCE_SUMMARY) {
        let summary: BalanceSummary = read_json(&dir.join(BALANCE_SUMMARY))?;
        out.extend(check_balance_summary(&summary));
    }
    if has(BALANCE_TRACE) {
        let rows: Vec<BalanceRow> = read_csv(&dir.join(BALANCE_TRACE))?;
        out.push(check_robot_conservation(&rows));
    }
    if has(COST_CSV) {
        let rows: Vec<CostRow> = read_csv(&dir.join(COST_CSV))?;
        out.push(check_cost_monotone(&rows));
    }
    if has(ROBOTS_CSV) {
        let rows: Vec<RobotRow> = read_csv(&dir.join(ROBOTS_CSV))?;
        out.push(check_robots(&rows, world.as_ref()));
    }
    if out.is_empty() {
        return Err(CheckError::Empty(dir.to_path_buf()));
    }
    Ok(out)
}

pub fn check_equidistance(world: &World, dump: &GvgDump) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut intruder = None;
    for e in &dump.graph.edges {
        let (i, j) = e.obstacle_pair;
        if i.max(j) >= world.polygon_count() {
            return CheckResult::new("equidistance", false, format!("edge {} names a missing obstacle", e.id));
        }
        for smp in &e.samples {
            let d = world.distances(smp.position);
            worst = worst.max((d[i] - d[j]).abs());
            let m = d[i].min(d[j]);
            if let Some(k) = d.iter().position(|&dk| dk < m - EQUIDISTANCE_TOL) {
                intruder.get_or_insert((e.id, k));
            }
        }
    }
    let ok = worst <= EQUIDISTANCE_TOL && intruder.is_none();
    let mut detail = format!("max |d_i - d_j| = {worst:.3e} (tol {EQUIDISTANCE_TOL:e})");
    if let Some((e, k)) = intruder {
        detail.push_str(&format!("; obstacle {k} is closer than the pair on edge {e}"));
    }
    CheckResult::new("equidistance", ok, detail)
}

pub fn check_node_circles(world: &World, dump: &GvgDump) -> CheckResult {
    for n in &dump.graph.nodes {
        let d = world.distances(n.position);
        for &k in &n.defining_obstacles {
            if d.get(k).is_none_or(|dk| (dk - n.radius).abs() > NODE_TOL) {
                return CheckResult::new(
                    "node_circles",
                    false,
                    format!("node {}: obstacle {k} is not at the radius", n.id),
                );
            }
        }
        if let Some(k) = d.iter().position(|&dk| dk < n.radius - NODE_TOL) {
            return CheckResult::new("node_circles", false, format!("node {}: obstacle {k} inside the circle", n.id));
        }
    }
    CheckResult::new("node_circles", true, format!("{} node circles empty", dump.graph.nodes.len()))
}

/// Eq. 3 and Theorem 2, recomputed from the count vectors.
pub fn check_balance_summary(s: &BalanceSummary) -> Vec<CheckResult> {
    if s.k_star.len() != s.k_final.len() || s.k_final.is_empty() {
        return vec![CheckResult::new("eq3", false, "k_star and k_final differ in length")];
    }
    let dev = balance::deviation_vector(&s.k_final, &s.k_star);
    let eq3 = balance::check_eq3(&dev.c);
    let mut out = vec![CheckResult::new(
        "eq3",
        eq3.ok,
        format!("c = {:?}, c_bar = {:.6}, alpha = {}, beta = {}", dev.c, dev.c_bar, eq3.alpha, eq3.beta),
    )];
    out.push(match balance::verify_theorem2(&s.k_final, &s.k_star) {
        Ok(r) => CheckResult::new(
            "theorem2",
            r.holds,
            format!("S_p = {:.6} <= S_f = {:.6} < S_p + S2 = {:.6}", r.s_p, r.s_f, r.s_p + r.s2),
        ),
        Err(e) => CheckResult::new("theorem2", false, e.to_string()),
    });
    out
}

pub fn check_robot_conservation(rows: &[BalanceRow]) -> CheckResult {
    let mut totals: Vec<(usize, i64)> = Vec::new();
    for r in rows {
        match totals.last_mut() {
            Some((round, sum)) if *round == r.round => *sum += r.k,
            _ => totals.push((r.round, r.k)),
        }
    }
    let Some(&(_, first)) = totals.first() else {
        return CheckResult::new("robot_conservation", false, "empty balance trace");
    };
    match totals.iter().find(|(_, k)| *k != first) {
        None => CheckResult::new("robot_conservation", true, format!("sum K = {first} in all {} rounds", totals.len())),
        Some((round, k)) => {
            CheckResult::new("robot_conservation", false, format!("round {round}: sum K = {k}, expected {first}"))
        }
    }
}

/// Scaled cost never rises by more than [`COST_SLACK`] from the balanced state on.
pub fn check_cost_monotone(rows: &[CostRow]) -> CheckResult {
    let Some(start) = rows.iter().position(|r| r.phase == "balanced") else {
        return CheckResult::new("cost_monotone", false, "no balanced marker in cost.csv");
    };
    let rows = &rows[start..];
    if let Some(w) = rows.windows(2).find(|w| !(w[1].h_scaled <= w[0].h_scaled + COST_SLACK)) {
        return CheckResult::new(
            "cost_monotone",
            false,
            format!("step {}: H rises from {} to {}", w[1].step, w[0].h_scaled, w[1].h_scaled),
        );
    }
    let (first, last) = (rows[0].h_scaled, rows[rows.len() - 1].h_scaled);
    CheckResult::new("cost_monotone", true, format!("H from {first} to {last} over {} rows", rows.len()))
}

/// Same robot count at every recorded step, and every position in free space when the world is known.
pub fn check_robots(rows: &[RobotRow], world: Option<&World>) -> CheckResult {
    let mut per_step: Vec<(usize, usize)> = Vec::new();
    for r in rows {
        match per_step.last_mut() {
            Some((step, n)) if *step == r.step => *n += 1,
            _ => per_step.push((r.step, 1)),
        }
    }
    if let Some(&(_, n0)) = per_step.first() {
        if let Some((step, n)) = per_step.iter().find(|(_, n)| *n != n0) {
            return CheckResult::new("robots", false, format!("step {step} has {n} robots, expected {n0}"));
        }
    }
    if let Some(w) = world {
        if let Some(r) = rows.iter().find(|r| !w.contains(Vec2::new(r.x, r.y))) {
            return CheckResult::new(
                "robots",
                false,
                format!("robot {} at step {} is outside free space", r.id, r.step),
            );
        }
    }
    let detail = match world {
        Some(_) => format!("{} rows, all in free space", rows.len()),
        None => format!("{} rows; no gvg.json, containment not checked", rows.len()),
    };
    CheckResult::new("robots", true, detail)
}
