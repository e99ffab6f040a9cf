//! Generalized Voronoi graph: extraction from a polygonal world, tube (Frenet) coordinates along
//! each edge, and the cell decomposition with masses and adjacency.

mod cells;
mod edge;
mod extract;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvError;
use crate::geom::Vec2;

pub use cells::{build_cells, cell_mass};
pub use edge::{EdgeFrame, Projection, FOLD_TOL};
pub use extract::{extract_gvg, ExtractOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GvgError {
    #[error("grid resolution {resolution} is too coarse: {detail}")]
    ResolutionTooCoarse { resolution: f64, detail: String },
    #[error("free space is disconnected at this grid resolution ({components} components)")]
    DisconnectedFreeSpace { components: usize },
    #[error("cell {cell} has non-positive mass {mass}")]
    NonpositiveMass { cell: usize, mass: f64 },
    #[error("point ({x}, {y}) is outside the tube of edge {edge} (|r| = {r}, clearance {eps})")]
    OutsideTube { edge: usize, x: f64, y: f64, r: f64, eps: f64 },
    #[error("tube coordinates (s = {s}, r = {r}) are out of range for edge {edge}")]
    OutOfRange { edge: usize, s: f64, r: f64 },
    #[error("tube folds at s = {s}, r = {r}: jacobian {jacobian}")]
    FoldedTube { s: f64, r: f64, jacobian: f64 },
    #[error("invalid grid resolution {0}")]
    BadResolution(f64),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// A point equidistant from three or more obstacles where edges meet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GvgNode {
    pub id: usize,
    pub position: Vec2,
    /// Radius of the node circle: clearance to the nearest obstacle.
    pub radius: f64,
    pub defining_obstacles: Vec<usize>,
    /// One closest boundary point per defining obstacle, same order.
    pub closest_points: Vec<Vec2>,
    pub incident_edges: Vec<usize>,
}

impl GvgNode {
    /// Closest point on obstacle `k`, if `k` defines this node.
    pub fn closest_point(&self, k: usize) -> Option<Vec2> {
        self.defining_obstacles.iter().position(|&o| o == k).map(|p| self.closest_points[p])
    }
}

/// One arc-length sample of an edge together with its Frenet frame and tube half-widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeSample {
    pub s: f64,
    pub position: Vec2,
    pub tangent: Vec2,
    /// Left normal `(-tau_y, tau_x)`: the row vector `tau` times `[[0, 1], [-1, 0]]`.
    pub normal: Vec2,
    /// Signed curvature; positive when the edge turns toward `normal`.
    pub curvature: f64,
    pub clearance: f64,
    pub eps_plus: f64,
    pub eps_minus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "id")]
pub enum Terminus {
    Node(usize),
    /// Branch that ends on the outer boundary without a node.
    Boundary,
    /// Closed loop with no node; both ends coincide.
    Loop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GvgEdge {
    pub id: usize,
    pub obstacle_pair: (usize, usize),
    pub samples: Vec<EdgeSample>,
    pub length: f64,
    pub endpoints: (Terminus, Terminus),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GvgCell {
    pub id: usize,
    pub edge: usize,
    /// Density integral over the cell's tube.
    pub mass: f64,
    pub neighbors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GvgGraph {
    pub nodes: Vec<GvgNode>,
    pub edges: Vec<GvgEdge>,
    pub cells: Vec<GvgCell>,
    pub grid_resolution: f64,
    pub total_mass: f64,
}

impl GvgGraph {
    pub fn cell_edge(&self, cell: usize) -> &GvgEdge {
        &self.edges[self.cells[cell].edge]
    }

    /// Nodes shared by the edges of two cells, lowest id first.
    pub fn shared_nodes(&self, a: usize, b: usize) -> Vec<usize> {
        let ends = |c: usize| {
            let e = self.cell_edge(c);
            [e.endpoints.0, e.endpoints.1]
                .into_iter()
                .filter_map(|t| match t {
                    Terminus::Node(n) => Some(n),
                    _ => None,
                })
                .collect::<Vec<_>>()
        };
        let eb = ends(b);
        let mut shared: Vec<usize> = ends(a).into_iter().filter(|n| eb.contains(n)).collect();
        shared.sort_unstable();
        shared.dedup();
        shared
    }

    /// Cell adjacency as neighbor lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        self.cells.iter().map(|c| c.neighbors.clone()).collect()
    }
}
