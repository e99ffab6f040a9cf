//! Quadrature over tube coordinates.
//!
//! Integrals along an edge use a fixed uniform grid in arc length and integrate the piecewise
//! linear interpolant of nodal values. Sub-interval integrals therefore telescope exactly, and the
//! derivative of an integral with respect to a moving limit is the interpolant at that limit.

use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use crate::env::DensityField;
use crate::geom::Vec2;
use crate::gvg::{EdgeFrame, GvgEdge};

/// Values that can be integrated: a vector space over `f64`.
pub trait Linear: Copy + Add<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
}

impl Linear for f64 {
    fn zero() -> Self {
        0.0
    }
}

impl Linear for Vec2 {
    fn zero() -> Self {
        Vec2::ZERO
    }
}

/// Quadrature resolution: `n_s` panels along the edge per robot, `n_r` panels across the tube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quadrature {
    pub n_s: usize,
    pub n_r: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature { n_s: 64, n_r: 16 }
    }
}

impl Quadrature {
    pub fn new(n_s: usize, n_r: usize) -> Self {
        Quadrature { n_s, n_r }
    }

    pub fn is_valid(&self) -> bool {
        self.n_s >= 4 && self.n_r >= 4
    }

    pub fn refined(&self) -> Self {
        Quadrature { n_s: 2 * self.n_s, n_r: 2 * self.n_r }
    }

    /// Arc-length grid for a cell holding `robots` robots.
    pub fn s_grid(&self, edge: &GvgEdge, robots: usize) -> SGrid {
        SGrid::uniform(edge.length, self.n_s * robots.max(1))
    }
}

/// Uniform grid on `[0, length]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SGrid {
    pub length: f64,
    pub nodes: Vec<f64>,
}

impl SGrid {
    pub fn uniform(length: f64, panels: usize) -> Self {
        let panels = panels.max(1);
        let nodes = (0..=panels).map(|k| length * k as f64 / panels as f64).collect();
        SGrid { length, nodes }
    }

    pub fn panels(&self) -> usize {
        self.nodes.len() - 1
    }

    fn step(&self) -> f64 {
        self.length / self.panels() as f64
    }

    /// Panel index and fraction for `s`, clamped to the grid.
    fn locate(&self, s: f64) -> (usize, f64) {
        let n = self.panels();
        let h = self.step();
        if h <= 0.0 {
            return (0, 0.0);
        }
        let x = (s / h).clamp(0.0, n as f64);
        let k = (x.floor() as usize).min(n - 1);
        (k, x - k as f64)
    }

    /// Piecewise-linear interpolant of nodal `values` at `s`.
    pub fn interp<T: Linear>(&self, values: &[T], s: f64) -> T {
        let (k, t) = self.locate(s);
        values[k] * (1.0 - t) + values[k + 1] * t
    }

    /// Integral of the piecewise-linear interpolant over `[a, b]`.
    pub fn integrate<T: Linear>(&self, values: &[T], a: f64, b: f64) -> T {
        debug_assert_eq!(values.len(), self.nodes.len());
        let a = a.clamp(0.0, self.length);
        let b = b.clamp(0.0, self.length);
        if b <= a {
            return T::zero();
        }
        let (ka, _) = self.locate(a);
        let (kb, _) = self.locate(b);
        let fa = self.interp(values, a);
        let fb = self.interp(values, b);
        if ka == kb {
            return (fa + fb) * (0.5 * (b - a));
        }
        let mut acc = (fa + values[ka + 1]) * (0.5 * (self.nodes[ka + 1] - a));
        for k in ka + 1..kb {
            acc = acc + (values[k] + values[k + 1]) * (0.5 * (self.nodes[k + 1] - self.nodes[k]));
        }
        acc + (values[kb] + fb) * (0.5 * (b - self.nodes[kb]))
    }
}

/// Trapezoid rule across the tube at arc length `s`:
/// `sum_r w_r * J(s, r) * f(frame, q(s, r), r)` over the clipped normal range.
pub fn cross_section<T: Linear>(
    edge: &GvgEdge,
    s: f64,
    n_r: usize,
    mut f: impl FnMut(&EdgeFrame, Vec2, f64) -> T,
) -> T {
    let frame = edge.frame(s);
    let (lo, hi) = edge.r_range(s);
    let n = n_r.max(1);
    let dr = (hi - lo) / n as f64;
    if dr <= 0.0 {
        return T::zero();
    }
    let mut acc = T::zero();
    for k in 0..=n {
        let r = lo + dr * k as f64;
        let w = if k == 0 || k == n { 0.5 * dr } else { dr };
        let jac = 1.0 - r * frame.curvature;
        let q = frame.position + frame.normal * r;
        acc = acc + f(&frame, q, r) * (w * jac);
    }
    acc
}

/// Projected density `phi_hat(s)`: density integrated across the tube with the area element.
pub fn projected_density(edge: &GvgEdge, s: f64, field: &DensityField, n_r: usize) -> f64 {
    cross_section(edge, s, n_r, |_, q, _| field.density(q))
}

/// Density integral over the whole tube of `edge`.
pub fn tube_mass(edge: &GvgEdge, field: &DensityField, grid: &SGrid, n_r: usize) -> f64 {
    let values: Vec<f64> = grid.nodes.iter().map(|&s| projected_density(edge, s, field, n_r)).collect();
    grid.integrate(&values, 0.0, grid.length)
}
