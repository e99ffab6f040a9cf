//! Distributed weighted load balancing of robot counts across cells.
//!
//! Two phases run in synchronous rounds over the cell adjacency graph. Averaging drives the
//! per-cell loads `x = K / e` to consensus and yields fractional ideal counts `K*`; the integer
//! phase then moves single robots along edges (offer, accept, pass) until every deviation
//! `c = K - floor(K*)` sits at the floor or ceiling of the mean deviation.

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Loads closer than this (relative) count as equal, so rounding noise never drives a proposal.
pub const LOAD_TIE: f64 = 1e-12;

/// Ideal counts within this distance of an integer are treated as that integer before flooring.
pub const FLOOR_SNAP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BalanceError {
    #[error("cell graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },
    #[error("cell {cell} has non-positive mass {mass}")]
    NonpositiveMass { cell: usize, mass: f64 },
    #[error("invalid balance config: {0}")]
    BadConfig(String),
    #[error("adjacency lists {adjacency} cells but {states} states were given")]
    SizeMismatch { adjacency: usize, states: usize },
    #[error("configuration does not satisfy the terminal condition (alpha = {alpha}, beta = {beta}, cells = {cells})")]
    Eq3Violated { alpha: usize, beta: usize, cells: usize },
}

/// Load-balancing state of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellLoad {
    pub cell_id: usize,
    /// Robot count.
    pub k: i64,
    /// Cell mass.
    pub mass: f64,
    /// Load; fractional once averaging starts.
    pub x: f64,
    /// Ideal count, set by [`ideal_loads`].
    pub k_star: f64,
    /// Deviation `k - floor(k_star)`.
    pub c: i64,
}

impl CellLoad {
    pub fn new(cell_id: usize, k: i64, mass: f64) -> Self {
        CellLoad { cell_id, k, mass, x: k as f64 / mass, k_star: 0.0, c: 0 }
    }

    pub fn floor_k_star(&self) -> i64 {
        floor_snapped(self.k_star)
    }
}

pub(crate) fn floor_snapped(v: f64) -> i64 {
    let r = v.round();
    if (v - r).abs() <= FLOOR_SNAP {
        r as i64
    } else {
        v.floor() as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceConfig {
    /// Number of averaging rounds.
    pub t1: usize,
    /// Index of the final integer round; the integer phase runs rounds `t1..t2`.
    pub t2: usize,
    pub seed: u64,
    /// Never let a pass drop a cell below one robot.
    pub guard_min_robots: bool,
    /// Average loads weighted by cell mass instead of plainly.
    #[serde(default)]
    pub mass_weighted: bool,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig { t1: 200, t2: 280, seed: 0, guard_min_robots: true, mass_weighted: false }
    }
}

impl BalanceConfig {
    pub fn validate(&self) -> Result<(), BalanceError> {
        if self.t1 < 1 {
            return Err(BalanceError::BadConfig("t1 must be at least 1".into()));
        }
        if self.t2 <= self.t1 {
            return Err(BalanceError::BadConfig(format!("t2 ({}) must exceed t1 ({})", self.t2, self.t1)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Message {
    Offer { from: usize, to: usize, c: i64 },
    Accept { from: usize, to: usize },
    Transfer { from: usize, to: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Initial,
    Averaging,
    Integer,
}

/// One cell's row in a round record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub cell_id: usize,
    pub k: i64,
    pub x: f64,
    /// Deviation; only meaningful in the integer phase.
    pub c: Option<i64>,
    pub offers_sent: usize,
    /// Robots passed out of the cell this round.
    pub transfers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub phase: Phase,
    pub cells: Vec<CellRow>,
    pub messages: Vec<Message>,
    /// Passes skipped by the minimum-robot guard, as (from, to).
    pub guarded: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BalanceTrace {
    pub rounds: Vec<RoundRecord>,
}

impl BalanceTrace {
    fn push(
        &mut self,
        round: usize,
        phase: Phase,
        states: &[CellLoad],
        messages: Vec<Message>,
        guarded: Vec<(usize, usize)>,
    ) {
        let cells = states
            .iter()
            .enumerate()
            .map(|(i, s)| CellRow {
                cell_id: s.cell_id,
                k: s.k,
                x: s.x,
                c: (phase == Phase::Integer).then_some(s.c),
                offers_sent: messages.iter().filter(|m| matches!(m, Message::Offer { from, .. } if *from == i)).count(),
                transfers: messages
                    .iter()
                    .filter(|m| matches!(m, Message::Transfer { from, .. } if *from == i))
                    .count(),
            })
            .collect();
        self.rounds.push(RoundRecord { round, phase, cells, messages, guarded });
    }

    /// Transfers in round order.
    pub fn transfers(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rounds.iter().flat_map(|r| {
            r.messages.iter().filter_map(|m| match *m {
                Message::Transfer { from, to } => Some((from, to)),
                _ => None,
            })
        })
    }
}

/// Per-cell random streams. Each cell draws only from its own stream, so a round's outcome does
/// not depend on the order in which cells are evaluated.
#[derive(Debug, Clone)]
pub struct CellStreams {
    rngs: Vec<ChaCha8Rng>,
}

impl CellStreams {
    pub fn new(seed: u64, cells: usize, phase: u64) -> Self {
        let rngs = (0..cells as u64)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((phase << 32) | i);
                rng
            })
            .collect();
        CellStreams { rngs }
    }

    /// Uniform choice among `ties`, which must be non-empty.
    fn pick(&mut self, cell: usize, ties: &[usize]) -> usize {
        if ties.len() == 1 {
            return ties[0];
        }
        ties[self.rngs[cell].random_range(0..ties.len())]
    }
}

fn check_inputs(states: &[CellLoad], adjacency: &[Vec<usize>]) -> Result<(), BalanceError> {
    if states.len() != adjacency.len() {
        return Err(BalanceError::SizeMismatch { adjacency: adjacency.len(), states: states.len() });
    }
    for s in states {
        if !(s.mass > 0.0) {
            return Err(BalanceError::NonpositiveMass { cell: s.cell_id, mass: s.mass });
        }
    }
    let components = component_count(adjacency);
    if components > 1 {
        return Err(BalanceError::DisconnectedGraph { components });
    }
    Ok(())
}

pub fn component_count(adjacency: &[Vec<usize>]) -> usize {
    let n = adjacency.len();
    let mut seen = vec![false; n];
    let mut count = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for &j in &adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

/// Neighbours of `i` attaining the extreme of `key` (minimum if `min`).
fn extreme_neighbors<T: PartialOrd + Copy>(adj: &[usize], key: impl Fn(usize) -> T, min: bool) -> Vec<usize> {
    let mut best: Option<T> = None;
    let mut ties = Vec::new();
    for &j in adj {
        let v = key(j);
        let better = match best {
            None => true,
            Some(b) => {
                if min {
                    v < b
                } else {
                    v > b
                }
            }
        };
        if better {
            best = Some(v);
            ties.clear();
            ties.push(j);
        } else if best.is_some_and(|b| v == b) {
            ties.push(j);
        }
    }
    ties
}

/// One averaging round. Every cell proposes to its least-loaded neighbour when that load is
/// lower (beyond [`LOAD_TIE`]). Proposals are granted largest load gap first (ties by proposer
/// id) as long as neither end is already paired, and each granted pair replaces both loads by
/// their mean. Returns the pairs.
pub fn averaging_round(x: &mut [f64], adjacency: &[Vec<usize>], streams: &mut CellStreams) -> Vec<(usize, usize)> {
    average_pairs(x, None, adjacency, streams)
}

/// Like [`averaging_round`], but a pair moves to its mass-weighted mean, so `sum(mass * x)` is
/// conserved instead of `sum(x)` and the ideal counts add up to the robot total.
pub fn weighted_averaging_round(
    x: &mut [f64],
    mass: &[f64],
    adjacency: &[Vec<usize>],
    streams: &mut CellStreams,
) -> Vec<(usize, usize)> {
    average_pairs(x, Some(mass), adjacency, streams)
}

fn average_pairs(
    x: &mut [f64],
    mass: Option<&[f64]>,
    adjacency: &[Vec<usize>],
    streams: &mut CellStreams,
) -> Vec<(usize, usize)> {
    let n = x.len();
    let mut proposals = Vec::new();
    for i in 0..n {
        if adjacency[i].is_empty() {
            continue;
        }
        let ties = extreme_neighbors(&adjacency[i], |j| x[j], true);
        let j = streams.pick(i, &ties);
        if x[i] - x[j] > LOAD_TIE * x[i].abs().max(x[j].abs()).max(1.0) {
            proposals.push((i, j));
        }
    }
    proposals.sort_by(|&(a, ja), &(b, jb)| (x[b] - x[jb]).total_cmp(&(x[a] - x[ja])).then(a.cmp(&b)));
    let mut paired = vec![false; n];
    let mut pairs = Vec::new();
    for (i, j) in proposals {
        if paired[i] || paired[j] {
            continue;
        }
        paired[i] = true;
        paired[j] = true;
        pairs.push((i, j));
    }
    for &(i, j) in &pairs {
        let m = match mass {
            None => 0.5 * (x[i] + x[j]),
            Some(e) => (e[i] * x[i] + e[j] * x[j]) / (e[i] + e[j]),
        };
        x[i] = m;
        x[j] = m;
    }
    pairs
}

/// Runs `cfg.t1` averaging rounds and sets `k_star = mass * x(t1)` and the initial deviations.
/// The trace holds the initial state (round 0) and every averaging round.
pub fn ideal_loads(
    states: &[CellLoad],
    adjacency: &[Vec<usize>],
    cfg: &BalanceConfig,
) -> Result<(Vec<CellLoad>, BalanceTrace), BalanceError> {
    cfg.validate()?;
    check_inputs(states, adjacency)?;
    let mut out: Vec<CellLoad> = states.to_vec();
    for s in &mut out {
        s.x = s.k as f64 / s.mass;
    }
    let mut trace = BalanceTrace::default();
    trace.push(0, Phase::Initial, &out, Vec::new(), Vec::new());
    let mut streams = CellStreams::new(cfg.seed, out.len(), 1);
    let mut x: Vec<f64> = out.iter().map(|s| s.x).collect();
    let mass: Vec<f64> = out.iter().map(|s| s.mass).collect();
    for round in 1..=cfg.t1 {
        if cfg.mass_weighted {
            weighted_averaging_round(&mut x, &mass, adjacency, &mut streams);
        } else {
            averaging_round(&mut x, adjacency, &mut streams);
        }
        for (s, &xi) in out.iter_mut().zip(&x) {
            s.x = xi;
        }
        trace.push(round, Phase::Averaging, &out, Vec::new(), Vec::new());
    }
    for s in &mut out {
        s.k_star = s.mass * s.x;
        s.c = s.k - s.floor_k_star();
    }
    let k_total: i64 = out.iter().map(|s| s.k).sum();
    let k_star_total: f64 = out.iter().map(|s| s.k_star).sum();
    if (k_star_total - k_total as f64).abs() > 1e-9 {
        debug!("ideal counts sum to {k_star_total}, robots number {k_total}");
    }
    Ok((out, trace))
}

/// One integer round (offer, accept, pass) against the snapshot of deviations at its start.
/// Returns the messages sent and the passes skipped by the guard.
pub fn balance_round(
    states: &mut [CellLoad],
    adjacency: &[Vec<usize>],
    streams: &mut CellStreams,
    guard_min_robots: bool,
) -> (Vec<Message>, Vec<(usize, usize)>) {
    let n = states.len();
    let c: Vec<i64> = states.iter().map(|s| s.c).collect();
    let k: Vec<i64> = states.iter().map(|s| s.k).collect();
    let mut messages = Vec::new();

    let mut offers: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        if adjacency[i].is_empty() {
            continue;
        }
        let ties = extreme_neighbors(&adjacency[i], |j| c[j], true);
        let jo = streams.pick(i, &ties);
        if c[jo] < c[i] {
            offers[jo].push(i);
            messages.push(Message::Offer { from: i, to: jo, c: c[i] });
        }
    }

    let mut accepted_by: Vec<Option<usize>> = vec![None; n];
    for j in 0..n {
        if offers[j].is_empty() {
            continue;
        }
        let ties = extreme_neighbors(&offers[j], |i| c[i], false);
        let ja = streams.pick(j, &ties);
        accepted_by[ja] = Some(j);
        messages.push(Message::Accept { from: j, to: ja });
    }

    let mut guarded = Vec::new();
    for i in 0..n {
        let Some(h) = accepted_by[i] else { continue };
        if guard_min_robots && k[i] - 1 < 1 {
            debug!("guard: cell {i} keeps its last robot instead of passing to {h}");
            guarded.push((i, h));
            continue;
        }
        states[i].c -= 1;
        states[i].k -= 1;
        states[h].c += 1;
        states[h].k += 1;
        messages.push(Message::Transfer { from: i, to: h });
    }
    (messages, guarded)
}

/// Runs the integer phase for rounds `t1..t2` on states whose `k_star` and `c` are set. Final
/// counts are `floor(k_star) + c(t2)`.
pub fn run_balance(
    states: &[CellLoad],
    adjacency: &[Vec<usize>],
    cfg: &BalanceConfig,
) -> Result<(Vec<CellLoad>, BalanceTrace), BalanceError> {
    cfg.validate()?;
    check_inputs(states, adjacency)?;
    let mut out = states.to_vec();
    let mut trace = BalanceTrace::default();
    let mut streams = CellStreams::new(cfg.seed, out.len(), 2);
    for round in cfg.t1..cfg.t2 {
        let (messages, guarded) = balance_round(&mut out, adjacency, &mut streams, cfg.guard_min_robots);
        if !guarded.is_empty() {
            warn!("round {round}: minimum-robot guard skipped {} pass(es)", guarded.len());
        }
        trace.push(round + 1, Phase::Integer, &out, messages, guarded);
    }
    for s in &mut out {
        s.k = s.floor_k_star() + s.c;
        s.x = s.k as f64 / s.mass;
    }
    Ok((out, trace))
}

/// Both phases back to back; the trace covers rounds `0..=t2`.
pub fn balance(
    states: &[CellLoad],
    adjacency: &[Vec<usize>],
    cfg: &BalanceConfig,
) -> Result<(Vec<CellLoad>, BalanceTrace), BalanceError> {
    let (ideal, mut trace) = ideal_loads(states, adjacency, cfg)?;
    let (fin, rest) = run_balance(&ideal, adjacency, cfg)?;
    trace.rounds.extend(rest.rounds);
    Ok((fin, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub c: Vec<i64>,
    pub c_bar: f64,
    /// Whether `c_bar` lies in `[0, 1)`.
    pub in_range: bool,
}

pub fn deviation_vector(k: &[i64], k_star: &[f64]) -> Deviation {
    let c: Vec<i64> = k.iter().zip(k_star).map(|(&k, &ks)| k - floor_snapped(ks)).collect();
    let c_bar = c.iter().sum::<i64>() as f64 / c.len().max(1) as f64;
    let in_range = (0.0..1.0).contains(&c_bar);
    if !in_range {
        warn!("mean deviation {c_bar} is outside [0, 1)");
    }
    Deviation { c, c_bar, in_range }
}

/// Floor and ceiling of the mean of `c`, computed exactly.
fn mean_bounds(c: &[i64]) -> (i64, i64) {
    let n = c.len() as i64;
    let sum: i64 = c.iter().sum();
    let lo = sum.div_euclid(n);
    let hi = if sum.rem_euclid(n) == 0 { lo } else { lo + 1 };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Eq3Check {
    pub ok: bool,
    /// Cells at the floor of the mean deviation.
    pub alpha: usize,
    /// Cells at its ceiling (zero when the mean is an integer).
    pub beta: usize,
}

/// Terminal condition: every deviation is the floor or the ceiling of the mean deviation.
pub fn check_eq3(c: &[i64]) -> Eq3Check {
    if c.is_empty() {
        return Eq3Check { ok: true, alpha: 0, beta: 0 };
    }
    let (lo, hi) = mean_bounds(c);
    let alpha = c.iter().filter(|&&v| v == lo).count();
    let beta = if hi == lo { 0 } else { c.iter().filter(|&&v| v == hi).count() };
    let n = c.len() as i64;
    let sum: i64 = c.iter().sum();
    let ok = alpha + beta == c.len() && alpha as i64 * lo + beta as i64 * hi == sum && sum - n * lo == beta as i64;
    Eq3Check { ok, alpha, beta }
}

/// Ideal deviations for `total_robots` robots: cells sorted by fractional part of `k_star`
/// (ties by index); the smallest get the floor of the mean deviation, the rest its ceiling.
pub fn ideal_configuration(k_star: &[f64], total_robots: i64) -> Vec<i64> {
    let n = k_star.len();
    if n == 0 {
        return Vec::new();
    }
    let floors: i64 = k_star.iter().map(|&v| floor_snapped(v)).sum();
    let sum = total_robots - floors;
    let lo = sum.div_euclid(n as i64);
    let beta = (sum - lo * n as i64) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| fractional(k_star[a]).total_cmp(&fractional(k_star[b])).then(a.cmp(&b)));
    let mut c = vec![lo; n];
    for &i in &order[n - beta..] {
        c[i] = lo + 1;
    }
    c
}

pub fn fractional(v: f64) -> f64 {
    v - floor_snapped(v) as f64
}

/// `S = sum |K_i - K*_i|`.
pub fn balance_objective(k: &[i64], k_star: &[f64]) -> f64 {
    k.iter().zip(k_star).map(|(&k, &ks)| (k as f64 - ks).abs()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Sum of fractional parts of the ideal counts.
    pub s1: f64,
    pub s2: f64,
    /// Objective of the ideal configuration.
    pub s_p: f64,
    /// Objective of the given configuration.
    pub s_f: f64,
    /// `s_p <= s_f < s_p + s2`.
    pub holds: bool,
}

/// Compares a terminal configuration against the ideal one and the claimed bound
/// `S_p <= S_f < S_p + min(|E| - S1, S1)`.
pub fn verify_theorem2(k_final: &[i64], k_star: &[f64]) -> Result<BoundReport, BalanceError> {
    let dev = deviation_vector(k_final, k_star);
    let eq3 = check_eq3(&dev.c);
    if !eq3.ok {
        return Err(BalanceError::Eq3Violated { alpha: eq3.alpha, beta: eq3.beta, cells: k_final.len() });
    }
    let total: i64 = k_final.iter().sum();
    let ideal_c = ideal_configuration(k_star, total);
    let ideal_k: Vec<i64> = k_star.iter().zip(&ideal_c).map(|(&ks, &c)| floor_snapped(ks) + c).collect();
    let s1: f64 = k_star.iter().map(|&v| fractional(v)).sum();
    let s2 = (k_star.len() as f64 - s1).min(s1);
    let s_p = balance_objective(&ideal_k, k_star);
    let s_f = balance_objective(k_final, k_star);
    // objectives are sums of the same rounded terms; allow for their rounding only
    let slack = 1e-9 * (1.0 + s_p.abs());
    let holds = s_p <= s_f + slack && s_f < s_p + s2;
    Ok(BoundReport { s1, s2, s_p, s_f, holds })
}
