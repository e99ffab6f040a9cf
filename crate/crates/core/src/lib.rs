//! GVG-based multi-robot coverage of polygonal regions with obstacles.
//!
//! The free space is split into cells around the edges of its generalized Voronoi graph, robots
//! are distributed over the cells by a two-phase load-balancing protocol, and inside each cell
//! robots descend the locational coverage cost in tube coordinates along the edge.

pub mod balance;
pub mod coverage;
pub mod env;
pub mod geom;
pub mod gvg;
pub mod quad;
pub mod sim;

pub use balance::{BalanceConfig, BalanceError, BalanceTrace, CellLoad};
pub use coverage::{CellPartition, CoverageError, RobotState};
pub use env::{DensityField, EnvError, GaussianBump, Polygon, PolygonRole, World};
pub use geom::Vec2;
pub use gvg::{
    build_cells, extract_gvg, EdgeSample, ExtractOptions, GvgCell, GvgEdge, GvgError, GvgGraph, GvgNode, Terminus,
};
pub use quad::{Quadrature, SGrid};
pub use sim::{ScenarioConfig, SimError, SimState, SimTrace, WorldSpec};
