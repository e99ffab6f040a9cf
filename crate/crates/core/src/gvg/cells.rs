//! Cell masses by tube quadrature.

use log::warn;

use super::{GvgEdge, GvgError, GvgGraph};
use crate::env::{DensityField, World};
use crate::quad::{tube_mass, Quadrature, SGrid};

/// Density integral over the tube of one edge. The arc-length grid is never coarser than the
/// edge's own samples.
pub fn cell_mass(edge: &GvgEdge, field: &DensityField, quad: &Quadrature) -> f64 {
    let panels = quad.n_s.max(edge.samples.len() - 1);
    tube_mass(edge, field, &SGrid::uniform(edge.length, panels), quad.n_r)
}

/// Fills every cell's mass and the graph's total mass.
pub fn build_cells(
    graph: &mut GvgGraph,
    _world: &World,
    field: &DensityField,
    quad: &Quadrature,
) -> Result<(), GvgError> {
    let mut masses = Vec::with_capacity(graph.cells.len());
    for cell in &graph.cells {
        let edge = &graph.edges[cell.edge];
        if edge.samples.iter().any(|s| s.curvature * s.eps_plus >= 1.0 || -s.curvature * s.eps_minus >= 1.0) {
            warn!("tube of edge {} folds; its normal range is clipped", edge.id);
        }
        masses.push(cell_mass(edge, field, quad));
    }
    for (cell, mass) in graph.cells.iter_mut().zip(masses) {
        if !(mass > 0.0) {
            return Err(GvgError::NonpositiveMass { cell: cell.id, mass });
        }
        cell.mass = mass;
    }
    graph.total_mass = graph.cells.iter().map(|c| c.mass).sum();
    Ok(())
}
