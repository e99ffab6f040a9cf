//! Full pipeline: random placement, cell assignment, load balancing with physical transfers, then
//! gradient-descent coverage inside every cell.

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balance::{balance, BalanceConfig, BalanceError, BalanceTrace, CellLoad};
use crate::coverage::{control_inputs, order_and_boundaries, CellMoments, CoverageError, RobotState};
use crate::env::{DensityField, EnvError, World};
use crate::geom::Vec2;
use crate::gvg::{build_cells, extract_gvg, ExtractOptions, GvgEdge, GvgError, GvgGraph, Terminus};
use crate::quad::Quadrature;

/// Robots are kept this far inside the tube walls.
pub const DELTA_MARGIN: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("{robots} robots cannot cover {cells} cells")]
    InfeasibleK { robots: usize, cells: usize },
    #[error("the graph has no cells to cover")]
    NoCells,
    #[error("invalid scenario: {0}")]
    BadConfig(String),
    #[error("transfer from cell {from} to cell {to}, but cell {from} has no robot")]
    EmptySender { from: usize, to: usize },
    #[error("no free-space sample after {attempts} attempts")]
    Sampling { attempts: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Gvg(#[from] GvgError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error(transparent)]
    Coverage(#[from] CoverageError),
}

/// Polygons of a world before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub outer: Vec<Vec2>,
    #[serde(default)]
    pub obstacles: Vec<Vec<Vec2>>,
}

impl WorldSpec {
    pub fn build(&self) -> Result<World, EnvError> {
        World::new(self.outer.clone(), self.obstacles.clone())
    }

    /// A 372 x 247 rectangle with four quadrilateral obstacles, two rows of two.
    pub fn reference() -> Self {
        let v = |p: &[(f64, f64)]| p.iter().map(|&(x, y)| Vec2::new(x, y)).collect::<Vec<_>>();
        WorldSpec {
            outer: v(&[(0.0, 0.0), (372.0, 0.0), (372.0, 247.0), (0.0, 247.0)]),
            obstacles: vec![
                v(&[(45.0, 150.0), (120.0, 140.0), (130.0, 195.0), (60.0, 205.0)]),
                v(&[(215.0, 160.0), (300.0, 150.0), (315.0, 200.0), (225.0, 210.0)]),
                v(&[(85.0, 40.0), (165.0, 50.0), (155.0, 100.0), (95.0, 95.0)]),
                v(&[(240.0, 35.0), (320.0, 45.0), (310.0, 105.0), (250.0, 95.0)]),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub world: WorldSpec,
    pub density: DensityField,
    pub robot_count: usize,
    pub seed: u64,
    pub grid_resolution: f64,
    pub t1: usize,
    pub t2: usize,
    pub guard_min_robots: bool,
    pub mass_weighted: bool,
    pub dt: f64,
    pub steps: usize,
    pub k_g: f64,
    pub quadrature: Quadrature,
    /// Multiplier applied to every reported cost.
    pub report_scale: f64,
}

impl ScenarioConfig {
    pub fn new(world: WorldSpec, density: DensityField, robot_count: usize) -> Self {
        ScenarioConfig {
            world,
            density,
            robot_count,
            seed: 0,
            grid_resolution: 1.0,
            t1: 200,
            t2: 280,
            guard_min_robots: true,
            mass_weighted: false,
            dt: 0.05,
            steps: 2000,
            k_g: 0.1,
            quadrature: Quadrature::default(),
            report_scale: 1e-3,
        }
    }

    /// The reference world and density with 20 robots.
    pub fn reference() -> Self {
        ScenarioConfig::new(WorldSpec::reference(), DensityField::reference(), 20)
    }

    pub fn balance_config(&self) -> BalanceConfig {
        BalanceConfig {
            t1: self.t1,
            t2: self.t2,
            seed: self.seed,
            guard_min_robots: self.guard_min_robots,
            mass_weighted: self.mass_weighted,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::BadConfig(m));
        if self.robot_count == 0 {
            return bad("robot count must be positive".into());
        }
        if !(self.grid_resolution.is_finite() && self.grid_resolution > 0.0) {
            return bad(format!("grid resolution must be positive, got {}", self.grid_resolution));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.k_g.is_finite() && self.k_g > 0.0) {
            return bad(format!("k_g must be positive, got {}", self.k_g));
        }
        if !(self.report_scale.is_finite() && self.report_scale > 0.0) {
            return bad(format!("report scale must be positive, got {}", self.report_scale));
        }
        if !self.quadrature.is_valid() {
            return bad(format!(
                "quadrature needs n_s, n_r >= 4, got ({}, {})",
                self.quadrature.n_s, self.quadrature.n_r
            ));
        }
        self.balance_config().validate()?;
        self.density.validate()?;
        Ok(())
    }
}

/// World, graph, robots and per-cell loads at some point of the pipeline.
#[derive(Debug, Clone)]
pub struct SimState {
    pub world: World,
    pub graph: GvgGraph,
    /// Indexed by robot id.
    pub robots: Vec<RobotState>,
    pub loads: Vec<CellLoad>,
}

impl SimState {
    /// Robots of `cell` in id order.
    pub fn cell_robots(&self, cell: usize) -> Vec<RobotState> {
        self.robots.iter().filter(|r| r.cell == cell).copied().collect()
    }

    pub fn counts(&self) -> Vec<i64> {
        let mut k = vec![0; self.graph.cells.len()];
        for r in &self.robots {
            k[r.cell] += 1;
        }
        k
    }
}

/// Allowed normal offsets at `s`: the clipped tube range shrunk by [`DELTA_MARGIN`].
fn delta_bounds(edge: &GvgEdge, s: f64) -> (f64, f64) {
    let (lo, hi) = edge.r_range(s);
    let (a, b) = (lo + DELTA_MARGIN, hi - DELTA_MARGIN);
    if a <= b {
        (a, b)
    } else {
        let m = 0.5 * (lo + hi);
        (m, m)
    }
}

/// Moves `q` to the nearest tube point of `edge` in tube coordinates. Returns the new state and
/// whether the normal offset had to be clamped.
fn settle(id: usize, cell: usize, edge: &GvgEdge, q: Vec2) -> (RobotState, bool) {
    let p = edge.projection(q);
    let (lo, hi) = delta_bounds(edge, p.s);
    let delta = p.r.clamp(lo, hi);
    let clamped = delta != p.r || p.residual > 1e-9;
    (RobotState::from_tube(id, cell, edge, p.s, delta), clamped)
}

/// Distance from `q` to the tube of `edge`; zero inside.
fn tube_distance(edge: &GvgEdge, q: Vec2) -> (f64, f64) {
    let p = edge.projection(q);
    let (lo, hi) = edge.r_range(p.s);
    let excess = (p.r - hi).max(lo - p.r).max(0.0);
    (p.residual.hypot(excess), p.r.abs())
}

fn closest_cell(graph: &GvgGraph, q: Vec2, among: impl Iterator<Item = usize>) -> Option<usize> {
    among
        .map(|c| (tube_distance(graph.cell_edge(c), q), c))
        .min_by(|a, b| a.0 .0.total_cmp(&b.0 .0).then(a.0 .1.total_cmp(&b.0 .1)).then(a.1.cmp(&b.1)))
        .map(|(_, c)| c)
}

/// Builds the world, extracts the graph and computes cell masses.
pub fn build_environment(cfg: &ScenarioConfig) -> Result<(World, GvgGraph), SimError> {
    cfg.validate()?;
    let world = cfg.world.build()?;
    let mut graph = extract_gvg(&world, &ExtractOptions::new(cfg.grid_resolution))?;
    build_cells(&mut graph, &world, &cfg.density, &cfg.quadrature)?;
    Ok((world, graph))
}

/// [`build_environment`] followed by [`place_robots`].
pub fn initialize(cfg: &ScenarioConfig) -> Result<SimState, SimError> {
    let (world, graph) = build_environment(cfg)?;
    place_robots(world, graph, cfg)
}

/// Samples robots uniformly in free space and assigns each to the cell whose tube is nearest.
/// Empty cells then take the closest robot from a cell holding more than one.
pub fn place_robots(world: World, graph: GvgGraph, cfg: &ScenarioConfig) -> Result<SimState, SimError> {
    let n_cells = graph.cells.len();
    if n_cells == 0 {
        return Err(SimError::NoCells);
    }
    if cfg.robot_count < n_cells {
        return Err(SimError::InfeasibleK { robots: cfg.robot_count, cells: n_cells });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (lo, hi) = world.bbox();
    let max_attempts = 1000 * cfg.robot_count.max(1000);
    let mut points = Vec::with_capacity(cfg.robot_count);
    let mut attempts = 0;
    while points.len() < cfg.robot_count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(SimError::Sampling { attempts });
        }
        let q = Vec2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if world.contains(q) {
            points.push(q);
        }
    }

    let mut cell_of: Vec<usize> =
        points.iter().map(|&q| closest_cell(&graph, q, 0..n_cells).expect("at least one cell")).collect();
    let mut counts = vec![0usize; n_cells];
    for &c in &cell_of {
        counts[c] += 1;
    }
    while let Some(empty) = counts.iter().position(|&k| k == 0) {
        let edge = graph.cell_edge(empty);
        let (robot, _) = (0..points.len())
            .filter(|&r| counts[cell_of[r]] > 1)
            .map(|r| (r, tube_distance(edge, points[r]).0))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("robot count covers the cells");
        info!("cell {empty} is empty; robot {robot} moves there from cell {}", cell_of[robot]);
        counts[cell_of[robot]] -= 1;
        counts[empty] += 1;
        cell_of[robot] = empty;
    }

    let robots: Vec<RobotState> =
        points.iter().enumerate().map(|(id, &q)| settle(id, cell_of[id], graph.cell_edge(cell_of[id]), q).0).collect();
    let loads = graph.cells.iter().map(|c| CellLoad::new(c.id, counts[c.id] as i64, c.mass)).collect();
    Ok(SimState { world, graph, robots, loads })
}

/// Arc-length distance from `s` to the end of `edge` that sits on `node`.
fn distance_to_node(edge: &GvgEdge, node: usize, s: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (t, end) in [(edge.endpoints.0, 0.0), (edge.endpoints.1, edge.length)] {
        if t == Terminus::Node(node) {
            let d = (s - end).abs();
            best = Some(best.map_or(d, |b: f64| b.min(d)));
        }
    }
    best
}

/// Runs both balancing phases on the cell graph and replays every transfer physically: the
/// sending robot closest (in arc length) to the node shared by the two cells is reassigned and
/// dropped at the nearest point of the receiving tube.
pub fn run_load_balancing(state: &mut SimState, cfg: &ScenarioConfig) -> Result<BalanceTrace, SimError> {
    let adjacency = state.graph.adjacency();
    let (fin, trace) = balance(&state.loads, &adjacency, &cfg.balance_config())?;
    for (from, to) in trace.transfers() {
        let node = state.graph.shared_nodes(from, to).first().copied();
        let from_edge = state.graph.cell_edge(from);
        let node_pos = node.map(|n| state.graph.nodes[n].position);
        let pick = state
            .robots
            .iter()
            .filter(|r| r.cell == from)
            .map(|r| {
                let d = node
                    .and_then(|n| distance_to_node(from_edge, n, r.s))
                    .or_else(|| node_pos.map(|p| p.dist(r.position)))
                    .unwrap_or(0.0);
                (r.id, d)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(id, _)| id)
            .ok_or(SimError::EmptySender { from, to })?;
        let r = state.robots[pick];
        let (moved, _) = settle(r.id, to, state.graph.cell_edge(to), r.position);
        debug!("robot {} moves from cell {from} to cell {to}", r.id);
        state.robots[pick] = moved;
    }
    let counts = state.counts();
    debug_assert!(fin.iter().zip(&counts).all(|(l, &k)| l.k == k));
    state.loads = fin;
    Ok(trace)
}

/// Per-cell tables for the coverage phase; valid while cell counts do not change.
#[derive(Debug, Clone)]
pub struct CoverageTables {
    pub moments: Vec<CellMoments>,
}

impl CoverageTables {
    pub fn new(state: &SimState, cfg: &ScenarioConfig) -> Self {
        let counts = state.counts();
        let moments = state
            .graph
            .cells
            .iter()
            .map(|c| {
                CellMoments::new(
                    state.graph.cell_edge(c.id),
                    &cfg.density,
                    &cfg.quadrature,
                    counts[c.id].max(1) as usize,
                )
            })
            .collect();
        CoverageTables { moments }
    }
}

/// Control inputs of every robot, indexed by robot id.
pub fn velocities(state: &SimState, tables: &CoverageTables, k_g: f64) -> Result<Vec<Vec2>, SimError> {
    let mut u = vec![Vec2::ZERO; state.robots.len()];
    for cell in &state.graph.cells {
        let robots = state.cell_robots(cell.id);
        if robots.is_empty() {
            continue;
        }
        let edge = state.graph.cell_edge(cell.id);
        let part = order_and_boundaries(&robots, edge)?;
        for (r, v) in robots.iter().zip(control_inputs(&tables.moments[cell.id], &robots, &part, edge, k_g)) {
            u[r.id] = v;
        }
    }
    Ok(u)
}

/// Unscaled total coverage cost.
pub fn coverage_cost(state: &SimState, tables: &CoverageTables) -> Result<f64, SimError> {
    let mut h = 0.0;
    for cell in &state.graph.cells {
        let robots = state.cell_robots(cell.id);
        if robots.is_empty() {
            continue;
        }
        let part = order_and_boundaries(&robots, state.graph.cell_edge(cell.id))?;
        h += tables.moments[cell.id].cell_cost(&robots, &part);
    }
    Ok(h)
}

/// One explicit Euler step for all robots from a common snapshot. Returns how many robots had to
/// be clamped back into their tube.
pub fn step_coverage(state: &mut SimState, tables: &CoverageTables, dt: f64, k_g: f64) -> Result<usize, SimError> {
    let u = velocities(state, tables, k_g)?;
    let mut clamps = 0;
    for (r, v) in state.robots.iter_mut().zip(u) {
        if v == Vec2::ZERO {
            continue;
        }
        let (moved, clamped) = settle(r.id, r.cell, state.graph.cell_edge(r.cell), r.position + v * dt);
        if clamped {
            clamps += 1;
        }
        *r = moved;
    }
    if clamps > 0 {
        debug!("{clamps} robot(s) clamped into their tube");
    }
    Ok(clamps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimPhase {
    /// State right after load balancing, before any coverage step.
    Balanced,
    Coverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub phase: SimPhase,
    pub robots: Vec<RobotState>,
    pub counts: Vec<i64>,
    /// Total cost times the report scale.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    /// Robots as placed and assigned, before balancing.
    pub initial: Vec<RobotState>,
    pub balance: BalanceTrace,
    /// Final per-cell loads, with the ideal counts.
    pub loads: Vec<CellLoad>,
    pub steps: Vec<StepRecord>,
    /// Largest control input after the last step.
    pub final_speed: f64,
}

/// Initialization, load balancing and `cfg.steps` coverage steps. Returns the final state too.
pub fn run_with_state(cfg: &ScenarioConfig) -> Result<(SimState, SimTrace), SimError> {
    let mut state = initialize(cfg)?;
    let initial = state.robots.clone();
    let balance = run_load_balancing(&mut state, cfg)?;
    let tables = CoverageTables::new(&state, cfg);
    let counts = state.counts();
    let mut steps = Vec::with_capacity(cfg.steps + 1);
    let record = |state: &SimState, step: usize, phase: SimPhase| -> Result<StepRecord, SimError> {
        Ok(StepRecord {
            step,
            time: step as f64 * cfg.dt,
            phase,
            robots: state.robots.clone(),
            counts: counts.clone(),
            cost: coverage_cost(state, &tables)? * cfg.report_scale,
        })
    };
    steps.push(record(&state, 0, SimPhase::Balanced)?);
    for step in 1..=cfg.steps {
        step_coverage(&mut state, &tables, cfg.dt, cfg.k_g)?;
        steps.push(record(&state, step, SimPhase::Coverage)?);
    }
    let final_speed = velocities(&state, &tables, cfg.k_g)?.iter().map(|u| u.norm()).fold(0.0, f64::max);
    let trace = SimTrace { initial, balance, loads: state.loads.clone(), steps, final_speed };
    Ok((state, trace))
}

pub fn run(cfg: &ScenarioConfig) -> Result<SimTrace, SimError> {
    run_with_state(cfg).map(|(_, t)| t)
}
