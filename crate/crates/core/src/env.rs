//! Polygonal world model: outer boundary, obstacle holes, exact distance queries and density fields.
//!
//! Obstacle index 0 always refers to the outer boundary; indices `1..=M` are the holes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{closest_on_segment, ray_segment_hit, segments_intersect, Vec2};

/// Absolute tolerance for "two nearest" distance ties.
pub const TIE_TOL: f64 = 1e-9;
/// Points closer than this to an obstacle boundary have no distance gradient.
pub const DEGENERATE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("polygon has {0} vertices, at least 3 are required")]
    TooFewVertices(usize),
    #[error("polygon has zero area")]
    Degenerate,
    #[error("polygon {0} is self-intersecting")]
    SelfIntersecting(usize),
    #[error("obstacle {0} is not strictly inside the outer boundary")]
    ObstacleOutside(usize),
    #[error("obstacles {0} and {1} touch or overlap")]
    ObstaclesOverlap(usize, usize),
    #[error("obstacle index {0} out of range")]
    BadIndex(usize),
    #[error("point ({x}, {y}) lies on the boundary of obstacle {index}")]
    DegeneratePoint { x: f64, y: f64, index: usize },
    #[error("point ({x}, {y}) is outside the free space")]
    OutsideFreeSpace { x: f64, y: f64 },
    #[error("invalid density field: {0}")]
    BadDensity(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolygonRole {
    OuterBoundary,
    Obstacle,
}

/// A simple polygon. Orientation is normalized on construction: outer boundaries
/// counter-clockwise, obstacles clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Vec2>,
    role: PolygonRole,
}

impl Polygon {
    pub fn new(vertices: Vec<Vec2>, role: PolygonRole) -> Result<Self, EnvError> {
        let mut vertices = vertices;
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(EnvError::TooFewVertices(vertices.len()));
        }
        let area = signed_area(&vertices);
        if area.abs() < 1e-12 {
            return Err(EnvError::Degenerate);
        }
        let want_ccw = role == PolygonRole::OuterBoundary;
        if (area > 0.0) != want_ccw {
            vertices.reverse();
        }
        let poly = Self { vertices, role };
        if !poly.is_simple() {
            return Err(EnvError::SelfIntersecting(0));
        }
        Ok(poly)
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn role(&self) -> PolygonRole {
        self.role
    }

    /// Boundary segments in vertex order, closing back to the first vertex.
    pub fn segments(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |k| (self.vertices[k], self.vertices[(k + 1) % n]))
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn centroid(&self) -> Vec2 {
        let a = self.signed_area();
        let mut c = Vec2::ZERO;
        for (p, q) in self.segments() {
            let w = p.cross(q);
            c += (p + q) * w;
        }
        c / (6.0 * a)
    }

    pub fn bbox(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    /// Distance from `q` to the boundary curve and the boundary point realizing it.
    pub fn boundary_distance(&self, q: Vec2) -> (f64, Vec2) {
        let mut best = f64::INFINITY;
        let mut best_pt = self.vertices[0];
        for (a, b) in self.segments() {
            let c = closest_on_segment(q, a, b);
            let d = (q - c).norm_sq();
            if d < best {
                best = d;
                best_pt = c;
            }
        }
        (best.sqrt(), best_pt)
    }

    /// Even-odd rule; boundary points may land on either side.
    pub fn contains_even_odd(&self, q: Vec2) -> bool {
        let mut inside = false;
        for (a, b) in self.segments() {
            if (a.y > q.y) != (b.y > q.y) {
                let x = a.x + (q.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if q.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn on_boundary(&self, q: Vec2, tol: f64) -> bool {
        self.boundary_distance(q).0 <= tol
    }

    fn is_simple(&self) -> bool {
        let segs: Vec<_> = self.segments().collect();
        let n = segs.len();
        for i in 0..n {
            if segs[i].0 == segs[i].1 {
                return false;
            }
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(segs[i].0, segs[i].1, segs[j].0, segs[j].1) {
                    return false;
                }
            }
        }
        true
    }
}

fn signed_area(v: &[Vec2]) -> f64 {
    let n = v.len();
    (0..n).map(|k| v[k].cross(v[(k + 1) % n])).sum::<f64>() * 0.5
}

/// The free space: interior of the outer boundary minus the closed obstacle regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    outer: Polygon,
    obstacles: Vec<Polygon>,
}

impl World {
    pub fn new(outer: Vec<Vec2>, obstacles: Vec<Vec<Vec2>>) -> Result<Self, EnvError> {
        let outer = Polygon::new(outer, PolygonRole::OuterBoundary).map_err(|e| index_error(e, 0))?;
        let mut holes = Vec::with_capacity(obstacles.len());
        for (k, verts) in obstacles.into_iter().enumerate() {
            holes.push(Polygon::new(verts, PolygonRole::Obstacle).map_err(|e| index_error(e, k + 1))?);
        }
        for (k, hole) in holes.iter().enumerate() {
            let inside = hole.vertices().iter().all(|&v| outer.contains_even_odd(v) && !outer.on_boundary(v, 0.0));
            if !inside || polygons_cross(&outer, hole) {
                return Err(EnvError::ObstacleOutside(k + 1));
            }
        }
        for a in 0..holes.len() {
            for b in (a + 1)..holes.len() {
                let (pa, pb) = (&holes[a], &holes[b]);
                if polygons_cross(pa, pb)
                    || pa.contains_even_odd(pb.vertices()[0])
                    || pb.contains_even_odd(pa.vertices()[0])
                {
                    return Err(EnvError::ObstaclesOverlap(a + 1, b + 1));
                }
            }
        }
        Ok(Self { outer, obstacles: holes })
    }

    pub fn outer(&self) -> &Polygon {
        &self.outer
    }

    pub fn obstacles(&self) -> &[Polygon] {
        &self.obstacles
    }

    /// Number of boundary components, outer boundary included.
    pub fn polygon_count(&self) -> usize {
        self.obstacles.len() + 1
    }

    pub fn polygon(&self, i: usize) -> Result<&Polygon, EnvError> {
        match i {
            0 => Ok(&self.outer),
            _ => self.obstacles.get(i - 1).ok_or(EnvError::BadIndex(i)),
        }
    }

    pub fn bbox(&self) -> (Vec2, Vec2) {
        self.outer.bbox()
    }

    pub fn free_area(&self) -> f64 {
        self.outer.area() - self.obstacles.iter().map(Polygon::area).sum::<f64>()
    }

    /// Distance from `q` to boundary component `i` and the closest boundary point.
    pub fn distance_to_obstacle(&self, q: Vec2, i: usize) -> Result<(f64, Vec2), EnvError> {
        Ok(self.polygon(i)?.boundary_distance(q))
    }

    /// Unit gradient of `d_i` at `q`, pointing away from the closest boundary point.
    pub fn distance_gradient(&self, q: Vec2, i: usize) -> Result<Vec2, EnvError> {
        let (d, c) = self.distance_to_obstacle(q, i)?;
        if d <= DEGENERATE_TOL {
            return Err(EnvError::DegeneratePoint { x: q.x, y: q.y, index: i });
        }
        Ok((q - c) / d)
    }

    /// All boundary distances, indexed like [`World::polygon`].
    pub fn distances(&self, q: Vec2) -> Vec<f64> {
        (0..self.polygon_count())
            .map(|i| self.polygon(i).map(|p| p.boundary_distance(q).0).unwrap_or(f64::INFINITY))
            .collect()
    }

    /// The two closest boundary components, `d_i <= d_j` up to [`TIE_TOL`]; ties go to the lower index.
    pub fn two_nearest_obstacles(&self, q: Vec2) -> Result<((usize, f64), (usize, f64)), EnvError> {
        if !self.contains(q) {
            return Err(EnvError::OutsideFreeSpace { x: q.x, y: q.y });
        }
        let d = self.distances(q);
        let first = argmin_tie_low(&d, None);
        let second = argmin_tie_low(&d, Some(first));
        Ok(((first, d[first]), (second, d[second])))
    }

    /// Nearest-component label used for GVG extraction. Points inside an obstacle get that
    /// obstacle's index; points outside the outer boundary get 0.
    pub fn nearest_label(&self, q: Vec2) -> (usize, bool) {
        if !self.outer.contains_even_odd(q) {
            return (0, false);
        }
        for (k, hole) in self.obstacles.iter().enumerate() {
            if hole.contains_even_odd(q) {
                return (k + 1, false);
            }
        }
        let d = self.distances(q);
        (argmin_tie_low(&d, None), true)
    }

    /// Free-space membership: strictly inside the outer boundary and outside every closed obstacle.
    pub fn contains(&self, q: Vec2) -> bool {
        if !self.outer.contains_even_odd(q) || self.outer.on_boundary(q, 1e-12) {
            return false;
        }
        !self.obstacles.iter().any(|h| h.contains_even_odd(q) || h.on_boundary(q, 1e-12))
    }

    /// Distance along `direction` from `origin` to the first boundary crossing.
    /// Returns infinity only if the origin is outside the outer boundary.
    pub fn ray_cast(&self, origin: Vec2, direction: Vec2) -> f64 {
        self.ray_cast_from(origin, direction, 0.0)
    }

    /// As [`World::ray_cast`] but ignores hits at parameters `<= min_t`.
    pub fn ray_cast_from(&self, origin: Vec2, direction: Vec2, min_t: f64) -> f64 {
        self.ray_hit(origin, direction, min_t).0
    }

    /// First boundary crossing along the ray and the index of the polygon it belongs to.
    pub fn ray_hit(&self, origin: Vec2, direction: Vec2, min_t: f64) -> (f64, Option<usize>) {
        let dir = direction.normalized().unwrap_or(Vec2::new(1.0, 0.0));
        let mut best = f64::INFINITY;
        let mut which = None;
        for (k, poly) in std::iter::once(&self.outer).chain(self.obstacles.iter()).enumerate() {
            for (a, b) in poly.segments() {
                if let Some(t) = ray_segment_hit(origin, dir, a, b, min_t) {
                    if t < best {
                        best = t;
                        which = Some(k);
                    }
                }
            }
        }
        (best, which)
    }
}

fn index_error(e: EnvError, index: usize) -> EnvError {
    match e {
        EnvError::SelfIntersecting(_) => EnvError::SelfIntersecting(index),
        other => other,
    }
}

fn polygons_cross(a: &Polygon, b: &Polygon) -> bool {
    a.segments().any(|(p, q)| b.segments().any(|(r, s)| segments_intersect(p, q, r, s)))
}

fn argmin_tie_low(d: &[f64], skip: Option<usize>) -> usize {
    let mut best: Option<usize> = None;
    for (k, &v) in d.iter().enumerate() {
        if Some(k) == skip {
            continue;
        }
        match best {
            None => best = Some(k),
            Some(b) if v < d[b] - TIE_TOL => best = Some(k),
            _ => {}
        }
    }
    best.unwrap_or(0)
}

/// One bump of a Gaussian-mixture density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub center: Vec2,
    pub sigma: f64,
    pub weight: f64,
}

/// Importance density over the free space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DensityField {
    Uniform {
        value: f64,
    },
    /// `offset + scale * |q - center|^2`
    QuadraticRadial {
        center: Vec2,
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `floor + sum_k weight_k * exp(-|q - c_k|^2 / (2 sigma_k^2))`
    GaussianMixture {
        components: Vec<GaussianBump>,
        #[serde(default)]
        floor: f64,
    },
}

impl DensityField {
    /// The density used in the reference 372 x 247 scenario.
    pub fn reference() -> Self {
        DensityField::QuadraticRadial { center: Vec2::new(186.0, 86.0), scale: 1e-8, offset: 0.0 }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::BadDensity(m.to_string()));
        match self {
            DensityField::Uniform { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return bad("uniform value must be finite and non-negative");
                }
            }
            DensityField::QuadraticRadial { center, scale, offset } => {
                if !(center.is_finite() && scale.is_finite() && offset.is_finite()) {
                    return bad("quadratic-radial parameters must be finite");
                }
                if *scale < 0.0 || *offset < 0.0 {
                    return bad("quadratic-radial scale and offset must be non-negative");
                }
            }
            DensityField::GaussianMixture { components, floor } => {
                if !(floor.is_finite() && *floor >= 0.0) {
                    return bad("gaussian-mixture floor must be finite and non-negative");
                }
                for c in components {
                    if !(c.center.is_finite() && c.sigma.is_finite() && c.weight.is_finite()) {
                        return bad("gaussian component parameters must be finite");
                    }
                    if c.sigma <= 0.0 || c.weight < 0.0 {
                        return bad("gaussian components need sigma > 0 and weight >= 0");
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn density(&self, q: Vec2) -> f64 {
        match self {
            DensityField::Uniform { value } => *value,
            DensityField::QuadraticRadial { center, scale, offset } => offset + scale * (q - *center).norm_sq(),
            DensityField::GaussianMixture { components, floor } => {
                floor
                    + components
                        .iter()
                        .map(|c| c.weight * (-(q - c.center).norm_sq() / (2.0 * c.sigma * c.sigma)).exp())
                        .sum::<f64>()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Vec2> {
        vec![Vec2::new(x0, y0), Vec2::new(x1, y0), Vec2::new(x1, y1), Vec2::new(x0, y1)]
    }

    fn unit_square_world() -> World {
        World::new(rect(-10.0, -10.0, 10.0, 10.0), vec![rect(0.0, 0.0, 1.0, 1.0)]).unwrap()
    }

    fn three_obstacle_world() -> World {
        World::new(
            rect(0.0, 0.0, 30.0, 20.0),
            vec![rect(3.0, 3.0, 6.0, 6.0), rect(14.0, 12.0, 18.0, 16.0), rect(22.0, 3.0, 26.0, 8.0)],
        )
        .unwrap()
    }

    #[test]
    fn corner_and_face_distances() {
        let w = unit_square_world();
        let (d, c) = w.distance_to_obstacle(Vec2::new(5.0, 5.0), 1).unwrap();
        assert!((d - 4.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(c, Vec2::new(1.0, 1.0));
        let (d, c) = w.distance_to_obstacle(Vec2::new(0.5, 3.0), 1).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
        assert_eq!(c, Vec2::new(0.5, 1.0));
    }

    #[test]
    fn gradients_on_unit_square() {
        let w = unit_square_world();
        let g = w.distance_gradient(Vec2::new(0.5, 3.0), 1).unwrap();
        assert!((g - Vec2::new(0.0, 1.0)).norm() < 1e-15);
        let g = w.distance_gradient(Vec2::new(5.0, 5.0), 1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((g - Vec2::new(h, h)).norm() < 1e-15);
        assert!(matches!(w.distance_gradient(Vec2::new(0.5, 1.0), 1), Err(EnvError::DegeneratePoint { .. })));
    }

    #[test]
    fn orientation_is_normalized() {
        let w =
            World::new(rect(0.0, 0.0, 10.0, 10.0).into_iter().rev().collect(), vec![rect(2.0, 2.0, 3.0, 3.0)]).unwrap();
        assert!(w.outer().signed_area() > 0.0);
        assert!(w.obstacles()[0].signed_area() < 0.0);
    }

    #[test]
    fn invalid_worlds_rejected() {
        let bowtie = vec![Vec2::new(0.0, 0.0), Vec2::new(2.0, 1.0), Vec2::new(2.0, 0.0), Vec2::new(0.0, 2.0)];
        assert!(matches!(World::new(rect(-5.0, -5.0, 5.0, 5.0), vec![bowtie]), Err(EnvError::SelfIntersecting(1))));
        assert!(matches!(
            World::new(rect(0.0, 0.0, 5.0, 5.0), vec![rect(4.0, 4.0, 6.0, 6.0)]),
            Err(EnvError::ObstacleOutside(1))
        ));
        assert!(matches!(
            World::new(rect(0.0, 0.0, 10.0, 10.0), vec![rect(1.0, 1.0, 3.0, 3.0), rect(3.0, 1.0, 4.0, 2.0)]),
            Err(EnvError::ObstaclesOverlap(1, 2))
        ));
        assert!(matches!(World::new(vec![Vec2::ZERO, Vec2::new(1.0, 0.0)], vec![]), Err(EnvError::TooFewVertices(2))));
    }

    #[test]
    fn two_nearest_symmetric_midpoint() {
        let w =
            World::new(rect(-20.0, -20.0, 20.0, 20.0), vec![rect(-3.0, -0.5, -2.0, 0.5), rect(2.0, -0.5, 3.0, 0.5)])
                .unwrap();
        let ((i, di), (j, dj)) = w.two_nearest_obstacles(Vec2::ZERO).unwrap();
        assert_eq!((i, j), (1, 2));
        assert!((di - 2.0).abs() < 1e-12 && (dj - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_nearest_adjacent_obstacle_first() {
        let w = three_obstacle_world();
        let ((i, _), (j, _)) = w.two_nearest_obstacles(Vec2::new(15.0, 11.5)).unwrap();
        assert_eq!(i, 2);
        assert_ne!(j, 2);
        assert!(matches!(w.two_nearest_obstacles(Vec2::new(4.0, 4.0)), Err(EnvError::OutsideFreeSpace { .. })));
    }

    #[test]
    fn two_nearest_matches_exhaustive() {
        let w = three_obstacle_world();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 1000 {
            let q = Vec2::new(rng.random_range(0.0..30.0), rng.random_range(0.0..20.0));
            if !w.contains(q) {
                continue;
            }
            checked += 1;
            let ((i, di), (j, dj)) = w.two_nearest_obstacles(q).unwrap();
            let mut all: Vec<(f64, usize)> = (0..4)
                .map(|k| {
                    let poly = w.polygon(k).unwrap();
                    let d = poly
                        .segments()
                        .map(|(a, b)| (q - closest_on_segment(q, a, b)).norm())
                        .fold(f64::INFINITY, f64::min);
                    (d, k)
                })
                .collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_ne!(i, j);
            assert!(di <= dj + TIE_TOL);
            assert!((di - all[0].0).abs() < 1e-12 && (dj - all[1].0).abs() < 1e-12);
        }
    }

    #[test]
    fn contains_basic() {
        let w = World::new(rect(0.0, 0.0, 10.0, 10.0), vec![]).unwrap();
        assert!(w.contains(Vec2::new(5.0, 5.0)));
        let w = three_obstacle_world();
        for hole in w.obstacles() {
            assert!(!w.contains(hole.centroid()));
        }
        assert!(!w.contains(Vec2::new(0.0, 5.0)));
        assert!(!w.contains(Vec2::new(3.0, 4.0)));
        assert!(!w.contains(Vec2::new(-1.0, 5.0)));
    }

    fn winding_number(poly: &Polygon, q: Vec2) -> i32 {
        let mut angle = 0.0;
        for (a, b) in poly.segments() {
            let u = a - q;
            let v = b - q;
            angle += u.cross(v).atan2(u.dot(v));
        }
        (angle / std::f64::consts::TAU).round() as i32
    }

    #[test]
    fn contains_matches_winding_number() {
        let w = three_obstacle_world();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let q = Vec2::new(rng.random_range(-2.0..32.0), rng.random_range(-2.0..22.0));
            let oracle = winding_number(w.outer(), q) != 0 && w.obstacles().iter().all(|h| winding_number(h, q) == 0);
            assert_eq!(w.contains(q), oracle, "{q:?}");
        }
    }

    #[test]
    fn ray_cast_examples() {
        let w = World::new(rect(0.0, 0.0, 10.0, 10.0), vec![]).unwrap();
        assert!((w.ray_cast(Vec2::new(5.0, 5.0), Vec2::new(1.0, 0.0)) - 5.0).abs() < 1e-12);
        let w = World::new(rect(0.0, -1.0, 20.0, 11.0), vec![rect(4.0, 0.0, 6.0, 10.0)]).unwrap();
        assert!((w.ray_cast(Vec2::new(2.0, 2.0), Vec2::new(1.0, 0.0)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ray_cast_matches_segment_sweep() {
        let w = three_obstacle_world();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut n = 0;
        while n < 500 {
            let o = Vec2::new(rng.random_range(0.0..30.0), rng.random_range(0.0..20.0));
            if !w.contains(o) {
                continue;
            }
            n += 1;
            let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let u = Vec2::new(th.cos(), th.sin());
            let r = w.ray_cast(o, u);
            // oracle: solve each segment intersection in closed form via 2x2 Cramer
            let mut best = f64::INFINITY;
            for k in 0..w.polygon_count() {
                for (a, b) in w.polygon(k).unwrap().segments() {
                    let m = [[u.x, a.x - b.x], [u.y, a.y - b.y]];
                    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                    if det.abs() < 1e-14 {
                        continue;
                    }
                    let rhs = a - o;
                    let t = (rhs.x * m[1][1] - m[0][1] * rhs.y) / det;
                    let s = (m[0][0] * rhs.y - rhs.x * m[1][0]) / det;
                    if t > 0.0 && (0.0..=1.0).contains(&s) {
                        best = best.min(t);
                    }
                }
            }
            assert!((r - best).abs() < 1e-9);
            assert!(w.contains(o + u * (r - 1e-6)));
            assert!(!w.contains(o + u * (r + 1e-6)));
        }
    }

    #[test]
    fn density_values() {
        let f = DensityField::reference();
        assert_eq!(f.density(Vec2::new(186.0, 86.0)), 0.0);
        assert!((f.density(Vec2::ZERO) - 4.1992e-4).abs() < 1e-15);
        let u = DensityField::Uniform { value: 2.5 };
        assert_eq!(u.density(Vec2::new(-3.0, 1e6)), 2.5);
        let g = DensityField::GaussianMixture {
            components: vec![GaussianBump { center: Vec2::ZERO, sigma: 1.0, weight: 2.0 }],
            floor: 0.1,
        };
        assert!((g.density(Vec2::ZERO) - 2.1).abs() < 1e-15);
        assert!(DensityField::Uniform { value: -1.0 }.validate().is_err());
    }

    #[test]
    fn distance_matches_dense_boundary_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            // random convex polygon: sorted angles on a jittered circle
            let c = Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let mut angles: Vec<f64> =
                (0..rng.random_range(3..8)).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let verts: Vec<Vec2> =
                angles.iter().map(|&t| c + Vec2::new(t.cos(), t.sin()) * rng.random_range(1.0..3.0)).collect();
            let Ok(poly) = Polygon::new(verts, PolygonRole::Obstacle) else { continue };
            let q = Vec2::new(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
            let (d, _) = poly.boundary_distance(q);
            let segs: Vec<_> = poly.segments().collect();
            let per = 10_000 / segs.len();
            let mut oracle = f64::INFINITY;
            for (a, b) in segs {
                for k in 0..=per {
                    oracle = oracle.min(q.dist(a.lerp(b, k as f64 / per as f64)));
                }
            }
            assert!((d - oracle).abs() < 1e-3, "{d} vs {oracle}");
            assert!(d <= oracle + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn distance_is_one_lipschitz(
            x1 in -9.0f64..9.0, y1 in -9.0f64..9.0, x2 in -9.0f64..9.0, y2 in -9.0f64..9.0
        ) {
            let w = unit_square_world();
            let p = Vec2::new(x1, y1);
            let q = Vec2::new(x2, y2);
            for i in 0..2 {
                let a = w.distance_to_obstacle(p, i).unwrap().0;
                let b = w.distance_to_obstacle(q, i).unwrap().0;
                prop_assert!((a - b).abs() <= p.dist(q) + 1e-12);
            }
        }

        #[test]
        fn gradient_matches_finite_difference(x in 1.5f64..9.0, y in -9.0f64..9.0) {
            // right half-plane of the unit square world, away from the square's own medial axis
            let w = unit_square_world();
            let q = Vec2::new(x, y);
            let g = w.distance_gradient(q, 1).unwrap();
            prop_assert!((g.norm() - 1.0).abs() < 1e-12);
            let h = 1e-6;
            let d = |p: Vec2| w.distance_to_obstacle(p, 1).unwrap().0;
            let fd = Vec2::new(
                (d(q + Vec2::new(h, 0.0)) - d(q - Vec2::new(h, 0.0))) / (2.0 * h),
                (d(q + Vec2::new(0.0, h)) - d(q - Vec2::new(0.0, h))) / (2.0 * h),
            );
            prop_assert!((fd - g).norm() < 1e-4);
        }
    }
}
