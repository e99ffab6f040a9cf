//! Coverage control inside one cell.
//!
//! Robots are ordered by the arc length of their projection onto the cell's edge; sub-region
//! boundaries sit at arc-length midpoints between neighbours. The cost of robot `j` is
//! `int_{b_{j-1}}^{b_j} F_j(s) ds` with `F_j(s) = int |q(s, r) - p_j|^2 phi J dr`. Expanding the
//! square, every `F_j` is a combination of a few robot-independent cross-section moments, which
//! are tabulated once per cell on a uniform arc-length grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::DensityField;
use crate::geom::Vec2;
use crate::gvg::{GvgEdge, GvgError};
use crate::quad::{cross_section, Quadrature, SGrid};

pub use crate::quad::projected_density;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverageError {
    #[error("cell {cell} has no robots")]
    EmptyCell { cell: usize },
    #[error("sub-region of robot {robot} carries no density")]
    ZeroMass { robot: usize },
    #[error("robot {robot} index out of range")]
    NoSuchRobot { robot: usize },
    #[error(transparent)]
    Gvg(#[from] GvgError),
}

/// A robot and its tube coordinates on its cell's edge: `position = gamma(s) + delta * v(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: usize,
    pub cell: usize,
    pub position: Vec2,
    pub s: f64,
    pub delta: f64,
}

impl RobotState {
    /// Robot at `position`, with tube coordinates from projecting onto `edge`.
    pub fn at(id: usize, cell: usize, edge: &GvgEdge, position: Vec2) -> Self {
        let p = edge.projection(position);
        RobotState { id, cell, position, s: p.s, delta: p.r }
    }

    /// Robot at tube coordinates `(s, delta)`.
    pub fn from_tube(id: usize, cell: usize, edge: &GvgEdge, s: f64, delta: f64) -> Self {
        RobotState { id, cell, position: edge.frenet_point_unchecked(s, delta), s, delta }
    }
}

/// Robot order along the edge and the sub-region limits `0 = b_0 <= ... <= b_K = L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPartition {
    /// Indices into the robot slice, sorted by `s` then id.
    pub order: Vec<usize>,
    pub bounds: Vec<f64>,
}

impl CellPartition {
    /// Sub-region `[a, b]` of the robot at position `k` in `order`.
    pub fn interval(&self, k: usize) -> (f64, f64) {
        (self.bounds[k], self.bounds[k + 1])
    }

    /// Position in `order` of robot slice index `j`.
    pub fn rank(&self, j: usize) -> Option<usize> {
        self.order.iter().position(|&o| o == j)
    }
}

pub fn order_and_boundaries(robots: &[RobotState], edge: &GvgEdge) -> Result<CellPartition, CoverageError> {
    if robots.is_empty() {
        return Err(CoverageError::EmptyCell { cell: edge.id });
    }
    let mut order: Vec<usize> = (0..robots.len()).collect();
    order.sort_by(|&a, &b| robots[a].s.total_cmp(&robots[b].s).then(robots[a].id.cmp(&robots[b].id)));
    let mut bounds = Vec::with_capacity(robots.len() + 1);
    bounds.push(0.0);
    for w in order.windows(2) {
        let mid = 0.5 * (robots[w[0]].s + robots[w[1]].s);
        bounds.push(mid.clamp(0.0, edge.length));
    }
    bounds.push(edge.length);
    Ok(CellPartition { order, bounds })
}

/// Cross-section moments of a cell's tube at the nodes of a uniform arc-length grid. Positions
/// are taken relative to `origin` to keep the expanded squares well conditioned.
#[derive(Debug, Clone)]
pub struct CellMoments {
    pub grid: SGrid,
    pub origin: Vec2,
    /// `int phi J dr`
    m: Vec<f64>,
    /// `int (q - o) phi J dr`
    b: Vec<Vec2>,
    /// `int |q - o|^2 phi J dr`
    a: Vec<f64>,
    /// `int r phi J dr`
    r1: Vec<f64>,
    /// `int r^2 phi J dr`
    r2: Vec<f64>,
    /// `(gamma - o) * m`
    g1: Vec<Vec2>,
    /// `|gamma - o|^2 * m`
    g2: Vec<f64>,
    /// `v * r1`
    vr: Vec<Vec2>,
    /// `((gamma - o) . v) * r1`
    vg: Vec<f64>,
}

impl CellMoments {
    /// Tabulates the moments on `max(n_s * robots, samples - 1)` panels.
    pub fn new(edge: &GvgEdge, field: &DensityField, quad: &Quadrature, robots: usize) -> Self {
        let panels = (quad.n_s * robots.max(1)).max(edge.samples.len() - 1);
        let grid = SGrid::uniform(edge.length, panels);
        let origin = edge.samples[edge.samples.len() / 2].position;
        let n = grid.nodes.len();
        let mut cm = CellMoments {
            grid: grid.clone(),
            origin,
            m: Vec::with_capacity(n),
            b: Vec::with_capacity(n),
            a: Vec::with_capacity(n),
            r1: Vec::with_capacity(n),
            r2: Vec::with_capacity(n),
            g1: Vec::with_capacity(n),
            g2: Vec::with_capacity(n),
            vr: Vec::with_capacity(n),
            vg: Vec::with_capacity(n),
        };
        for &s in &grid.nodes {
            let mut frame = None;
            let (m, b, a, r1, r2) = cross_section(edge, s, quad.n_r, |f, q, r| {
                frame.get_or_insert(*f);
                let w = field.density(q);
                let d = q - origin;
                Moments { m: w, b: d * w, a: d.norm_sq() * w, r1: r * w, r2: r * r * w }
            })
            .into();
            let f = frame.unwrap_or_else(|| edge.frame(s));
            let g = f.position - origin;
            cm.m.push(m);
            cm.b.push(b);
            cm.a.push(a);
            cm.r1.push(r1);
            cm.r2.push(r2);
            cm.g1.push(g * m);
            cm.g2.push(g.norm_sq() * m);
            cm.vr.push(f.normal * r1);
            cm.vg.push(g.dot(f.normal) * r1);
        }
        cm
    }

    /// Density integral over `[a, b]`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        self.grid.integrate(&self.m, a, b)
    }

    pub fn total_mass(&self) -> f64 {
        self.mass(0.0, self.grid.length)
    }

    /// `F(s)` for a robot at `p`, interpolated on the grid.
    pub fn f_at(&self, s: f64, p: Vec2) -> f64 {
        let d = p - self.origin;
        self.grid.interp(&self.a, s) - 2.0 * self.grid.interp(&self.b, s).dot(d)
            + d.norm_sq() * self.grid.interp(&self.m, s)
    }

    /// `int_a^b F ds` for a robot at `p`.
    pub fn cost(&self, a: f64, b: f64, p: Vec2) -> f64 {
        let d = p - self.origin;
        self.grid.integrate(&self.a, a, b) - 2.0 * self.grid.integrate(&self.b, a, b).dot(d)
            + d.norm_sq() * self.mass(a, b)
    }

    /// Tangential part `int_a^b |gamma - p|^2 phi_hat ds`.
    pub fn cost_tan(&self, a: f64, b: f64, p: Vec2) -> f64 {
        let d = p - self.origin;
        self.grid.integrate(&self.g2, a, b) - 2.0 * self.grid.integrate(&self.g1, a, b).dot(d)
            + d.norm_sq() * self.mass(a, b)
    }

    /// Normal part `int_a^b int (r^2 + 2 r v . (gamma - p)) phi J dr ds`.
    pub fn cost_norm(&self, a: f64, b: f64, p: Vec2) -> f64 {
        let d = p - self.origin;
        self.grid.integrate(&self.r2, a, b) + 2.0 * self.grid.integrate(&self.vg, a, b)
            - 2.0 * self.grid.integrate(&self.vr, a, b).dot(d)
    }

    /// `int_a^b int (q - p) phi J dr ds`.
    fn first_moment(&self, a: f64, b: f64, p: Vec2) -> Vec2 {
        self.grid.integrate(&self.b, a, b) - (p - self.origin) * self.mass(a, b)
    }

    /// Density-weighted mean of `gamma` over `[a, b]`, its mass, and the mean normal offset.
    fn centroids(&self, a: f64, b: f64) -> Option<(Vec2, f64, f64)> {
        let mass = self.mass(a, b);
        if !(mass > 0.0) {
            return None;
        }
        let p_tan = self.origin + self.grid.integrate(&self.g1, a, b) / mass;
        let p_norm = self.grid.integrate(&self.r1, a, b) / mass;
        Some((p_tan, mass, p_norm))
    }

    /// Cost of the whole cell.
    pub fn cell_cost(&self, robots: &[RobotState], part: &CellPartition) -> f64 {
        part.order
            .iter()
            .enumerate()
            .map(|(k, &j)| {
                let (a, b) = part.interval(k);
                self.cost(a, b, robots[j].position)
            })
            .sum()
    }

    /// Gradient of the cell cost with respect to each robot's position, in slice order.
    pub fn gradients(&self, edge: &GvgEdge, robots: &[RobotState], part: &CellPartition) -> Vec<Vec2> {
        let n = part.order.len();
        let mut out = vec![Vec2::ZERO; robots.len()];
        for k in 0..n {
            let j = part.order[k];
            let p = robots[j].position;
            let (a, b) = part.interval(k);
            let mut g = self.first_moment(a, b, p) * -2.0;
            // moving p_j moves both midpoint boundaries next to it at half the speed of s_j
            let mut limit = 0.0;
            if k + 1 < n {
                let next = robots[part.order[k + 1]].position;
                limit += self.f_at(b, p) - self.f_at(b, next);
            }
            if k > 0 {
                let prev = robots[part.order[k - 1]].position;
                limit += self.f_at(a, prev) - self.f_at(a, p);
            }
            if limit != 0.0 {
                let proj = edge.projection(p);
                g = g + edge.projection_gradient(p, &proj) * (0.5 * limit);
            }
            out[j] = g;
        }
        out
    }
}

#[derive(Clone, Copy)]
struct Moments {
    m: f64,
    b: Vec2,
    a: f64,
    r1: f64,
    r2: f64,
}

impl From<Moments> for (f64, Vec2, f64, f64, f64) {
    fn from(x: Moments) -> Self {
        (x.m, x.b, x.a, x.r1, x.r2)
    }
}

impl std::ops::Add for Moments {
    type Output = Moments;
    fn add(self, o: Moments) -> Moments {
        Moments { m: self.m + o.m, b: self.b + o.b, a: self.a + o.a, r1: self.r1 + o.r1, r2: self.r2 + o.r2 }
    }
}

impl std::ops::Mul<f64> for Moments {
    type Output = Moments;
    fn mul(self, k: f64) -> Moments {
        Moments { m: self.m * k, b: self.b * k, a: self.a * k, r1: self.r1 * k, r2: self.r2 * k }
    }
}

impl crate::quad::Linear for Moments {
    fn zero() -> Self {
        Moments { m: 0.0, b: Vec2::ZERO, a: 0.0, r1: 0.0, r2: 0.0 }
    }
}

/// Coverage cost `H` of one cell.
pub fn cell_cost(
    robots: &[RobotState],
    edge: &GvgEdge,
    field: &DensityField,
    quad: &Quadrature,
) -> Result<f64, CoverageError> {
    let part = order_and_boundaries(robots, edge)?;
    let cm = CellMoments::new(edge, field, quad, robots.len());
    Ok(cm.cell_cost(robots, &part))
}

/// `(H_tan, H_norm)`: the cost split into the part seen from the edge point and the remainder.
pub fn cost_decomposition(
    robots: &[RobotState],
    edge: &GvgEdge,
    field: &DensityField,
    quad: &Quadrature,
) -> Result<(f64, f64), CoverageError> {
    let part = order_and_boundaries(robots, edge)?;
    let cm = CellMoments::new(edge, field, quad, robots.len());
    let mut tan = 0.0;
    let mut norm = 0.0;
    for (k, &j) in part.order.iter().enumerate() {
        let (a, b) = part.interval(k);
        tan += cm.cost_tan(a, b, robots[j].position);
        norm += cm.cost_norm(a, b, robots[j].position);
    }
    Ok((tan, norm))
}

/// Gradient-descent velocity `-k_g * dH/dp_j` for robot slice index `j`, including the motion of
/// the sub-region boundaries next to it.
pub fn control_input(
    j: usize,
    robots: &[RobotState],
    part: &CellPartition,
    edge: &GvgEdge,
    field: &DensityField,
    k_g: f64,
    quad: &Quadrature,
) -> Result<Vec2, CoverageError> {
    if j >= robots.len() {
        return Err(CoverageError::NoSuchRobot { robot: j });
    }
    let cm = CellMoments::new(edge, field, quad, robots.len());
    Ok(cm.gradients(edge, robots, part)[j] * -k_g)
}

/// Velocities for all robots of a cell from one snapshot, in slice order.
pub fn control_inputs(
    cm: &CellMoments,
    robots: &[RobotState],
    part: &CellPartition,
    edge: &GvgEdge,
    k_g: f64,
) -> Vec<Vec2> {
    cm.gradients(edge, robots, part).into_iter().map(|g| g * -k_g).collect()
}

/// Centroid targets of one sub-region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    /// Density-weighted mean of the edge point over the sub-region.
    pub p_tan: Vec2,
    /// Sub-region mass.
    pub m_tan: f64,
    /// Density-weighted mean normal offset over the sub-region.
    pub p_norm: f64,
    /// Mass behind `p_norm`; the same sub-region integral as `m_tan`.
    pub m_norm: f64,
}

pub fn centroid(cm: &CellMoments, part: &CellPartition, k: usize) -> Option<Centroid> {
    let (a, b) = part.interval(k);
    cm.centroids(a, b).map(|(p_tan, m, p_norm)| Centroid { p_tan, m_tan: m, p_norm, m_norm: m })
}

/// Two-term centroid form: `-2 k_g [M_tan (gamma(s_j) - p_tan) + M_norm (delta_j - p_norm) v(s_j)]`.
pub fn centroid_control(
    j: usize,
    robots: &[RobotState],
    part: &CellPartition,
    edge: &GvgEdge,
    field: &DensityField,
    k_g: f64,
    quad: &Quadrature,
) -> Result<Vec2, CoverageError> {
    let k = part.rank(j).ok_or(CoverageError::NoSuchRobot { robot: j })?;
    let cm = CellMoments::new(edge, field, quad, robots.len());
    let c = centroid(&cm, part, k).ok_or(CoverageError::ZeroMass { robot: robots[j].id })?;
    let r = &robots[j];
    let f = edge.frame(r.s);
    let u = (f.position - c.p_tan) * c.m_tan + f.normal * (c.m_norm * (r.delta - c.p_norm));
    Ok(u * (-2.0 * k_g))
}

/// Sum of cell costs scaled by `scale`. `cells[i]` holds the robots of cell `i`.
pub fn total_cost(
    edges: &[GvgEdge],
    cells: &[Vec<RobotState>],
    field: &DensityField,
    quad: &Quadrature,
    scale: f64,
) -> Result<f64, CoverageError> {
    let mut h = 0.0;
    for (edge, robots) in edges.iter().zip(cells) {
        h += cell_cost(robots, edge, field, quad)?;
    }
    Ok(h * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gvg::Terminus;

    fn corridor(len: f64, plus: f64, minus: f64) -> GvgEdge {
        let pts: Vec<Vec2> = (0..=40).map(|k| Vec2::new(len * k as f64 / 40.0, 0.0)).collect();
        GvgEdge::from_polyline(0, (0, 1), &pts, (Terminus::Boundary, Terminus::Boundary))
            .with_constant_widths(plus, minus)
    }

    #[test]
    fn midpoint_boundaries() {
        let e = corridor(10.0, 1.0, 1.0);
        let robots = [RobotState::from_tube(0, 0, &e, 6.0, 0.0), RobotState::from_tube(1, 0, &e, 2.0, 0.0)];
        let part = order_and_boundaries(&robots, &e).unwrap();
        assert_eq!(part.order, vec![1, 0]);
        assert_eq!(part.bounds, vec![0.0, 4.0, 10.0]);
    }

    #[test]
    fn coincident_robots_tie_by_id() {
        let e = corridor(10.0, 1.0, 1.0);
        let robots = [RobotState::from_tube(5, 0, &e, 3.0, 0.0), RobotState::from_tube(2, 0, &e, 3.0, 0.0)];
        let part = order_and_boundaries(&robots, &e).unwrap();
        assert_eq!(part.order, vec![1, 0]);
        assert_eq!(part.bounds, vec![0.0, 3.0, 10.0]);
    }

    #[test]
    fn empty_cell_is_an_error() {
        let e = corridor(10.0, 1.0, 1.0);
        assert_eq!(order_and_boundaries(&[], &e), Err(CoverageError::EmptyCell { cell: 0 }));
    }

    #[test]
    fn asymmetric_tube_normal_centroid() {
        let e = corridor(4.0, 2.0, 1.0);
        let robots = [RobotState::from_tube(0, 0, &e, 1.0, 0.0)];
        let part = order_and_boundaries(&robots, &e).unwrap();
        let cm = CellMoments::new(&e, &DensityField::Uniform { value: 1.0 }, &Quadrature::default(), 1);
        let c = centroid(&cm, &part, 0).unwrap();
        assert!((c.p_norm - 0.5).abs() < 1e-12);
        assert!((c.p_tan.x - 2.0).abs() < 1e-12);
        assert!((c.m_tan - 12.0).abs() < 1e-9);
    }

    #[test]
    fn zero_density_gives_zero_cost_and_no_centroid() {
        let e = corridor(4.0, 1.0, 1.0);
        let field = DensityField::Uniform { value: 0.0 };
        let robots = [RobotState::from_tube(0, 0, &e, 1.0, 0.3)];
        let q = Quadrature::default();
        assert_eq!(cell_cost(&robots, &e, &field, &q).unwrap(), 0.0);
        let part = order_and_boundaries(&robots, &e).unwrap();
        assert_eq!(centroid_control(0, &robots, &part, &e, &field, 0.1, &q), Err(CoverageError::ZeroMass { robot: 0 }));
    }
}
