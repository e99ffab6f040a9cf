//! Scenario files: TOML with `[world]`, `[density]`, `[robots]`, `[gvg]`, `[balance]` and
//! `[coverage]` sections, or a `[cells]` section describing a bare balancing problem.

use std::ops::Range;
use std::path::{Path, PathBuf};

use gvg_coverage::balance::{BalanceConfig, CellLoad};
use gvg_coverage::env::{DensityField, EnvError, GaussianBump};
use gvg_coverage::sim::{ScenarioConfig, WorldSpec};
use gvg_coverage::{Quadrature, Vec2};
use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Syntax { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{path}:{line}: {message}")]
    Invalid { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDoc {
    world: Option<Spanned<WorldDoc>>,
    density: Option<Spanned<DensityDoc>>,
    robots: Option<Spanned<RobotsDoc>>,
    gvg: Option<GvgDoc>,
    balance: Option<BalanceDoc>,
    coverage: Option<CoverageDoc>,
    cells: Option<Spanned<CellsDoc>>,
}

type Point = [f64; 2];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldDoc {
    outer: Spanned<Vec<Point>>,
    #[serde(default)]
    obstacles: Vec<Spanned<Vec<Point>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentDoc {
    center: Point,
    sigma: f64,
    weight: f64,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum DensityDoc {
    Uniform {
        value: f64,
    },
    QuadraticRadial {
        center: Point,
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
    GaussianMixture {
        components: Vec<ComponentDoc>,
        #[serde(default)]
        floor: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotsDoc {
    count: Spanned<i64>,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GvgDoc {
    grid_resolution: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BalanceDoc {
    t1: Option<Spanned<i64>>,
    t2: Option<Spanned<i64>>,
    guard_min_robots: Option<bool>,
    mass_weighted: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoverageDoc {
    dt: Option<Spanned<f64>>,
    steps: Option<Spanned<i64>>,
    k_g: Option<Spanned<f64>>,
    n_s: Option<Spanned<i64>>,
    n_r: Option<Spanned<i64>>,
    report_scale: Option<Spanned<f64>>,
    record_every: Option<Spanned<i64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellsDoc {
    masses: Spanned<Vec<f64>>,
    robots: Spanned<Vec<i64>>,
    adjacency: Spanned<Vec<Vec<i64>>>,
}

/// A balancing problem given directly as cell masses, counts and adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct AbstractCells {
    pub loads: Vec<CellLoad>,
    pub adjacency: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Present when the file has a world.
    pub sim: Option<ScenarioConfig>,
    /// Present when the file has a `[cells]` section.
    pub cells: Option<AbstractCells>,
    pub balance: BalanceConfig,
    /// Robot positions are written every this many coverage steps.
    pub record_every: usize,
}

impl Scenario {
    pub fn set_seed(&mut self, seed: u64) {
        self.balance.seed = seed;
        if let Some(s) = &mut self.sim {
            s.seed = seed;
        }
    }
}

struct Ctx<'a> {
    path: &'a Path,
    text: &'a str,
}

impl Ctx<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        line_col(self.text, span.start).0
    }

    fn invalid<T>(&self, span: Range<usize>, message: impl Into<String>) -> Result<T, ScenarioError> {
        Err(ScenarioError::Invalid { path: self.path.to_path_buf(), line: self.line(span), message: message.into() })
    }

    fn positive_f(&self, v: &Spanned<f64>, what: &str) -> Result<f64, ScenarioError> {
        let x = *v.get_ref();
        if !(x.is_finite() && x > 0.0) {
            return self.invalid(v.span(), format!("{what} must be a positive number, got {x}"));
        }
        Ok(x)
    }

    fn count(&self, v: &Spanned<i64>, what: &str, min: i64) -> Result<usize, ScenarioError> {
        let x = *v.get_ref();
        if x < min {
            return self.invalid(v.span(), format!("{what} must be at least {min}, got {x}"));
        }
        Ok(x as usize)
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn points(p: &[Point]) -> Vec<Vec2> {
    p.iter().map(|&[x, y]| Vec2::new(x, y)).collect()
}

pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    parse(&text, path)
}

/// Parses and validates scenario text; `path` is only used in messages.
pub fn parse(text: &str, path: &Path) -> Result<Scenario, ScenarioError> {
    let doc: FileDoc = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        ScenarioError::Syntax { path: path.to_path_buf(), line, column, message: e.message().to_string() }
    })?;
    let cx = Ctx { path, text };

    let mut balance = BalanceConfig::default();
    if let Some(b) = &doc.balance {
        if let Some(t1) = &b.t1 {
            balance.t1 = cx.count(t1, "balance.t1", 1)?;
        }
        if let Some(t2) = &b.t2 {
            balance.t2 = cx.count(t2, "balance.t2", 2)?;
            if balance.t2 <= balance.t1 {
                return cx.invalid(
                    t2.span(),
                    format!("balance.t2 ({}) must exceed balance.t1 ({})", balance.t2, balance.t1),
                );
            }
        }
        balance.guard_min_robots = b.guard_min_robots.unwrap_or(balance.guard_min_robots);
        balance.mass_weighted = b.mass_weighted.unwrap_or(balance.mass_weighted);
    }
    if balance.t2 <= balance.t1 {
        return Err(ScenarioError::Invalid {
            path: path.to_path_buf(),
            line: 1,
            message: format!("balance.t2 ({}) must exceed balance.t1 ({})", balance.t2, balance.t1),
        });
    }

    let cells = match &doc.cells {
        None => None,
        Some(c) => Some(parse_cells(&cx, c.get_ref())?),
    };

    let sim = match (&doc.world, &doc.density, &doc.robots) {
        (None, None, None) => None,
        (Some(w), Some(d), Some(r)) => Some(parse_sim(&cx, w, d, r, &doc, &balance)?),
        _ => {
            let missing: Vec<&str> =
                [("world", doc.world.is_none()), ("density", doc.density.is_none()), ("robots", doc.robots.is_none())]
                    .into_iter()
                    .filter_map(|(n, m)| m.then_some(n))
                    .collect();
            return Err(ScenarioError::Invalid {
                path: path.to_path_buf(),
                line: 1,
                message: format!("missing section(s): [{}]", missing.join("], [")),
            });
        }
    };
    if sim.is_none() && cells.is_none() {
        return Err(ScenarioError::Invalid {
            path: path.to_path_buf(),
            line: 1,
            message: "a scenario needs [world], [density] and [robots], or a [cells] section".into(),
        });
    }

    let mut record_every = 1;
    if let Some(r) = doc.coverage.as_ref().and_then(|c| c.record_every.as_ref()) {
        record_every = cx.count(r, "coverage.record_every", 1)?;
    }
    Ok(Scenario { sim, cells, balance, record_every })
}

fn parse_cells(cx: &Ctx, c: &CellsDoc) -> Result<AbstractCells, ScenarioError> {
    let masses = c.masses.get_ref();
    let robots = c.robots.get_ref();
    let adjacency = c.adjacency.get_ref();
    if masses.is_empty() {
        return cx.invalid(c.masses.span(), "cells.masses is empty");
    }
    if robots.len() != masses.len() {
        return cx.invalid(
            c.robots.span(),
            format!("cells.robots has {} entries, masses has {}", robots.len(), masses.len()),
        );
    }
    if adjacency.len() != masses.len() {
        return cx.invalid(
            c.adjacency.span(),
            format!("cells.adjacency has {} rows, masses has {}", adjacency.len(), masses.len()),
        );
    }
    if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
        return cx.invalid(c.masses.span(), format!("cell masses must be positive, got {m}"));
    }
    if let Some(k) = robots.iter().find(|k| **k < 0) {
        return cx.invalid(c.robots.span(), format!("robot counts must be non-negative, got {k}"));
    }
    let n = masses.len() as i64;
    let mut adj = Vec::with_capacity(adjacency.len());
    for (i, row) in adjacency.iter().enumerate() {
        let mut out = Vec::with_capacity(row.len());
        for &j in row {
            if j < 0 || j >= n || j as usize == i {
                return cx.invalid(c.adjacency.span(), format!("cells.adjacency[{i}] lists invalid neighbour {j}"));
            }
            if !adjacency[j as usize].contains(&(i as i64)) {
                return cx
                    .invalid(c.adjacency.span(), format!("adjacency is not symmetric: {i} lists {j} but not back"));
            }
            out.push(j as usize);
        }
        adj.push(out);
    }
    let loads = masses.iter().zip(robots).enumerate().map(|(i, (&m, &k))| CellLoad::new(i, k, m)).collect();
    Ok(AbstractCells { loads, adjacency: adj })
}

fn parse_sim(
    cx: &Ctx,
    w: &Spanned<WorldDoc>,
    d: &Spanned<DensityDoc>,
    r: &Spanned<RobotsDoc>,
    doc: &FileDoc,
    balance: &BalanceConfig,
) -> Result<ScenarioConfig, ScenarioError> {
    let world = WorldSpec {
        outer: points(w.get_ref().outer.get_ref()),
        obstacles: w.get_ref().obstacles.iter().map(|o| points(o.get_ref())).collect(),
    };
    if let Err(e) = world.build() {
        let obstacle_span = |i: usize| {
            i.checked_sub(1).and_then(|k| w.get_ref().obstacles.get(k)).map_or(w.get_ref().outer.span(), |o| o.span())
        };
        let span = match &e {
            EnvError::SelfIntersecting(i) | EnvError::ObstacleOutside(i) => obstacle_span(*i),
            EnvError::ObstaclesOverlap(i, _) => obstacle_span(*i),
            _ => w.span(),
        };
        return cx.invalid(span, format!("invalid world: {e}"));
    }

    let density = match d.get_ref() {
        DensityDoc::Uniform { value } => DensityField::Uniform { value: *value },
        DensityDoc::QuadraticRadial { center, scale, offset } => {
            DensityField::QuadraticRadial { center: Vec2::new(center[0], center[1]), scale: *scale, offset: *offset }
        }
        DensityDoc::GaussianMixture { components, floor } => DensityField::GaussianMixture {
            components: components
                .iter()
                .map(|c| GaussianBump { center: Vec2::new(c.center[0], c.center[1]), sigma: c.sigma, weight: c.weight })
                .collect(),
            floor: *floor,
        },
    };
    if let Err(e) = density.validate() {
        return cx.invalid(d.span(), format!("invalid density: {e}"));
    }

    let robots = r.get_ref();
    let mut cfg = ScenarioConfig::new(world, density, cx.count(&robots.count, "robots.count", 1)?);
    cfg.seed = robots.seed;
    cfg.t1 = balance.t1;
    cfg.t2 = balance.t2;
    cfg.guard_min_robots = balance.guard_min_robots;
    cfg.mass_weighted = balance.mass_weighted;
    if let Some(h) = doc.gvg.as_ref().and_then(|g| g.grid_resolution.as_ref()) {
        cfg.grid_resolution = cx.positive_f(h, "gvg.grid_resolution")?;
    }
    if let Some(c) = &doc.coverage {
        if let Some(v) = &c.dt {
            cfg.dt = cx.positive_f(v, "coverage.dt")?;
        }
        if let Some(v) = &c.steps {
            cfg.steps = cx.count(v, "coverage.steps", 0)?;
        }
        if let Some(v) = &c.k_g {
            cfg.k_g = cx.positive_f(v, "coverage.k_g")?;
        }
        if let Some(v) = &c.report_scale {
            cfg.report_scale = cx.positive_f(v, "coverage.report_scale")?;
        }
        let mut q = Quadrature::default();
        if let Some(v) = &c.n_s {
            q.n_s = cx.count(v, "coverage.n_s", 4)?;
        }
        if let Some(v) = &c.n_r {
            q.n_r = cx.count(v, "coverage.n_r", 4)?;
        }
        cfg.quadrature = q;
    }
    if let Err(e) = cfg.validate() {
        return cx.invalid(w.span().start..w.span().start, e.to_string());
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "[cells]\nmasses = [1.0, 2.0]\nrobots = [3, 3]\nadjacency = [[1], [0]]\n";

    #[test]
    fn abstract_cells() {
        let s = parse(TOY, Path::new("toy.toml")).unwrap();
        assert!(s.sim.is_none());
        let c = s.cells.unwrap();
        assert_eq!(c.loads[1].mass, 2.0);
        assert_eq!(c.adjacency, vec![vec![1], vec![0]]);
    }

    #[test]
    fn syntax_error_has_position() {
        let e = parse("[cells]\nmasses = [1.0, \n", Path::new("bad.toml")).unwrap_err();
        assert!(matches!(e, ScenarioError::Syntax { line: 2.., .. }), "{e}");
    }

    #[test]
    fn invalid_value_reports_its_line() {
        let text = format!("{TOY}[balance]\nt1 = 10\nt2 = 5\n");
        let e = parse(&text, Path::new("x.toml")).unwrap_err();
        match e {
            ScenarioError::Invalid { line, .. } => assert_eq!(line, 7),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = format!("{TOY}[coverage]\nstpes = 3\n");
        assert!(matches!(parse(&text, Path::new("x.toml")), Err(ScenarioError::Syntax { line: 6, .. })));
    }

    #[test]
    fn partial_world_is_rejected() {
        let text = "[world]\nouter = [[0,0],[1,0],[1,1]]\n";
        assert!(matches!(parse(text, Path::new("x.toml")), Err(ScenarioError::Invalid { .. })));
    }
}
