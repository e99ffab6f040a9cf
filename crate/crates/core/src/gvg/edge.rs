//! Tube coordinates along one edge.
//!
//! Between samples the centerline is linear and the normal is the normalized linear blend of the
//! sample normals, so `frenet_point` and `projection` are exact inverses of each other.

use super::{EdgeSample, GvgEdge, GvgError, Terminus};
use crate::geom::{circumcircle_curvature, Vec2};

/// Quadrature nodes keep `1 - r * kappa` at or above this value.
pub const FOLD_TOL: f64 = 1e-6;
const RANGE_TOL: f64 = 1e-9;
const TUBE_TOL: f64 = 1e-6;
const SMOOTH_WINDOW: usize = 5;

/// Interpolated frame at an arbitrary arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFrame {
    pub s: f64,
    pub position: Vec2,
    pub tangent: Vec2,
    pub normal: Vec2,
    pub curvature: f64,
    pub eps_plus: f64,
    pub eps_minus: f64,
}

/// Result of projecting a planar point onto an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub s: f64,
    pub r: f64,
    pub segment: usize,
    pub t: f64,
    /// Distance between the point and `frenet_point(s, r)`; nonzero only past the edge ends.
    pub residual: f64,
}

impl GvgEdge {
    /// Builds an edge from an ordered centerline. Arc length is the cumulative chord length,
    /// tangents are central differences, curvature comes from circumscribed circles smoothed over
    /// five samples. Clearances and half-widths start at zero.
    pub fn from_polyline(
        id: usize,
        obstacle_pair: (usize, usize),
        points: &[Vec2],
        endpoints: (Terminus, Terminus),
    ) -> GvgEdge {
        assert!(points.len() >= 2, "an edge needs at least two points");
        let closed = endpoints == (Terminus::Loop, Terminus::Loop);
        let n = points.len();
        let mut s = vec![0.0; n];
        for k in 1..n {
            s[k] = s[k - 1] + points[k].dist(points[k - 1]);
        }
        let tangent_at = |k: usize| -> Vec2 {
            let (a, b) = if closed && (k == 0 || k == n - 1) {
                (points[n - 2], points[1])
            } else if k == 0 {
                (points[0], points[1])
            } else if k == n - 1 {
                (points[n - 2], points[n - 1])
            } else {
                (points[k - 1], points[k + 1])
            };
            (b - a).normalized().unwrap_or(Vec2::new(1.0, 0.0))
        };
        let mut raw_kappa = vec![0.0; n];
        if n >= 3 {
            for k in 1..n - 1 {
                raw_kappa[k] = circumcircle_curvature(points[k - 1], points[k], points[k + 1]);
            }
            if closed {
                let k0 = circumcircle_curvature(points[n - 2], points[0], points[1]);
                raw_kappa[0] = k0;
                raw_kappa[n - 1] = k0;
            } else {
                raw_kappa[0] = raw_kappa[1];
                raw_kappa[n - 1] = raw_kappa[n - 2];
            }
        }
        let kappa = smooth(&raw_kappa, SMOOTH_WINDOW, closed);
        let samples = (0..n)
            .map(|k| {
                let tangent = tangent_at(k);
                EdgeSample {
                    s: s[k],
                    position: points[k],
                    tangent,
                    normal: tangent.perp(),
                    curvature: kappa[k],
                    clearance: 0.0,
                    eps_plus: 0.0,
                    eps_minus: 0.0,
                }
            })
            .collect();
        GvgEdge { id, obstacle_pair, samples, length: s[n - 1], endpoints }
    }

    /// Sets every sample's half-widths to the given constants.
    pub fn with_constant_widths(mut self, eps_plus: f64, eps_minus: f64) -> Self {
        for smp in &mut self.samples {
            smp.eps_plus = eps_plus;
            smp.eps_minus = eps_minus;
        }
        self
    }

    pub fn is_loop(&self) -> bool {
        self.endpoints == (Terminus::Loop, Terminus::Loop)
    }

    /// Mean spacing between consecutive samples.
    pub fn sample_spacing(&self) -> f64 {
        self.length / (self.samples.len() - 1) as f64
    }

    /// Segment index `k` and fraction `t` with `s` in `[s_k, s_{k+1}]`; clamps to the edge.
    pub fn locate(&self, s: f64) -> (usize, f64) {
        let smp = &self.samples;
        let last = smp.len() - 2;
        let s = s.clamp(0.0, self.length);
        let k = smp.partition_point(|x| x.s <= s).saturating_sub(1).min(last);
        let ds = smp[k + 1].s - smp[k].s;
        let t = if ds > 0.0 { ((s - smp[k].s) / ds).clamp(0.0, 1.0) } else { 0.0 };
        (k, t)
    }

    fn frame_at(&self, k: usize, t: f64) -> EdgeFrame {
        let a = &self.samples[k];
        let b = &self.samples[k + 1];
        let normal = a.normal.lerp(b.normal, t).normalized().unwrap_or(a.normal);
        EdgeFrame {
            s: a.s + t * (b.s - a.s),
            position: a.position.lerp(b.position, t),
            tangent: Vec2::new(normal.y, -normal.x),
            normal,
            curvature: a.curvature + t * (b.curvature - a.curvature),
            eps_plus: a.eps_plus + t * (b.eps_plus - a.eps_plus),
            eps_minus: a.eps_minus + t * (b.eps_minus - a.eps_minus),
        }
    }

    pub fn frame(&self, s: f64) -> EdgeFrame {
        let (k, t) = self.locate(s);
        self.frame_at(k, t)
    }

    /// Normal-offset interval at `s`, clipped so that `1 - r * kappa >= FOLD_TOL`.
    pub fn r_range(&self, s: f64) -> (f64, f64) {
        let f = self.frame(s);
        clip_range(-f.eps_minus, f.eps_plus, f.curvature)
    }

    /// `gamma(s) + r * v(s)`.
    pub fn frenet_point(&self, s: f64, r: f64) -> Result<Vec2, GvgError> {
        if !(s >= -RANGE_TOL && s <= self.length + RANGE_TOL) {
            return Err(GvgError::OutOfRange { edge: self.id, s, r });
        }
        let f = self.frame(s);
        if r > f.eps_plus + RANGE_TOL || r < -f.eps_minus - RANGE_TOL || !r.is_finite() {
            return Err(GvgError::OutOfRange { edge: self.id, s, r });
        }
        Ok(f.position + f.normal * r)
    }

    /// `gamma(s) + r * v(s)` without range checks.
    pub fn frenet_point_unchecked(&self, s: f64, r: f64) -> Vec2 {
        let f = self.frame(s);
        f.position + f.normal * r
    }

    /// Area element `1 - r * kappa(s)` of the tube map.
    pub fn jacobian(&self, s: f64, r: f64) -> Result<f64, GvgError> {
        let j = 1.0 - r * self.frame(s).curvature;
        if j <= FOLD_TOL {
            return Err(GvgError::FoldedTube { s, r, jacobian: j });
        }
        Ok(j)
    }

    /// Every normal foot of `q`: parameters where `q - gamma(s)` is parallel to `v(s)`.
    pub fn projection_candidates(&self, q: Vec2) -> Vec<Projection> {
        let mut out = Vec::new();
        for k in 0..self.samples.len() - 1 {
            let a = &self.samples[k];
            let b = &self.samples[k + 1];
            let dg = b.position - a.position;
            let dv = b.normal - a.normal;
            let w = q - a.position;
            // cross(w - t dg, v_k + t dv) = 0
            let qa = -dg.cross(dv);
            let qb = w.cross(dv) - dg.cross(a.normal);
            let qc = w.cross(a.normal);
            for t in quadratic_roots(qa, qb, qc) {
                if !(-1e-12..=1.0 + 1e-12).contains(&t) {
                    continue;
                }
                let t = t.clamp(0.0, 1.0);
                let f = self.frame_at(k, t);
                let r = (q - f.position).dot(f.normal);
                let residual = (f.position + f.normal * r).dist(q);
                out.push(Projection { s: f.s, r, segment: k, t, residual });
            }
        }
        out
    }

    /// Closest normal foot of `q` on the edge; past the ends the parameter is clamped and the
    /// residual reports the gap.
    pub fn projection(&self, q: Vec2) -> Projection {
        let best = self
            .projection_candidates(q)
            .into_iter()
            .filter(|p| p.residual < 1e-9)
            .min_by(|a, b| a.r.abs().total_cmp(&b.r.abs()).then(a.s.total_cmp(&b.s)));
        let end_fallback = || {
            let last = self.samples.len() - 2;
            [(0usize, 0.0f64), (last, 1.0)]
                .into_iter()
                .map(|(k, t)| {
                    let f = self.frame_at(k, t);
                    let r = (q - f.position).dot(f.normal);
                    let residual = (f.position + f.normal * r).dist(q);
                    Projection { s: f.s, r, segment: k, t, residual }
                })
                .min_by(|a, b| (a.residual.powi(2) + a.r.powi(2)).total_cmp(&(b.residual.powi(2) + b.r.powi(2))))
                .expect("two candidates")
        };
        match best {
            Some(p) => {
                let fb = end_fallback();
                // an end point can be closer than any interior foot
                if fb.residual.hypot(fb.r) + 1e-12 < p.r.abs() {
                    fb
                } else {
                    p
                }
            }
            None => end_fallback(),
        }
    }

    /// Tube coordinates `(s, r)` of `q`; fails if `q` is not inside the tube.
    pub fn project(&self, q: Vec2) -> Result<(f64, f64), GvgError> {
        let p = self.projection(q);
        let f = self.frame(p.s);
        if p.residual > TUBE_TOL || p.r > f.eps_plus + TUBE_TOL || p.r < -f.eps_minus - TUBE_TOL {
            return Err(GvgError::OutsideTube {
                edge: self.id,
                x: q.x,
                y: q.y,
                r: p.r,
                eps: if p.r >= 0.0 { f.eps_plus } else { f.eps_minus },
            });
        }
        Ok((p.s, p.r))
    }

    /// Gradient of the projected arc length with respect to the projected point.
    pub fn projection_gradient(&self, q: Vec2, p: &Projection) -> Vec2 {
        if p.residual > 1e-9 {
            return Vec2::ZERO;
        }
        let a = &self.samples[p.segment];
        let b = &self.samples[p.segment + 1];
        let ds = b.s - a.s;
        if ds <= 0.0 {
            return Vec2::ZERO;
        }
        let v = a.normal.lerp(b.normal, p.t);
        let dg = (b.position - a.position) / ds;
        let dv = (b.normal - a.normal) / ds;
        let gamma = a.position.lerp(b.position, p.t);
        let denom = dg.cross(v) - (q - gamma).cross(dv);
        if denom.abs() < 1e-14 {
            return Vec2::ZERO;
        }
        Vec2::new(v.y, -v.x) / denom
    }
}

/// Clips `[lo, hi]` so the tube jacobian stays at or above [`FOLD_TOL`].
pub(crate) fn clip_range(lo: f64, hi: f64, kappa: f64) -> (f64, f64) {
    let mut lo = lo;
    let mut hi = hi;
    if kappa > 0.0 {
        hi = hi.min((1.0 - FOLD_TOL) / kappa);
    } else if kappa < 0.0 {
        lo = lo.max((1.0 - FOLD_TOL) / kappa);
    }
    if hi < lo {
        hi = lo;
    }
    (lo, hi)
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return vec![];
    }
    if a.abs() <= 1e-12 * scale {
        if b.abs() <= 1e-300 {
            return vec![];
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    let qq = -0.5 * (b + b.signum() * sq);
    let mut roots = vec![qq / a];
    if qq != 0.0 {
        roots.push(c / qq);
    }
    roots
}

fn smooth(values: &[f64], window: usize, closed: bool) -> Vec<f64> {
    let n = values.len();
    let half = window / 2;
    if n < 3 {
        return values.to_vec();
    }
    // a closed loop repeats its first sample at the end
    let m = if closed { n - 1 } else { n };
    (0..n)
        .map(|k| {
            let k = if closed { k % m } else { k };
            let mut sum = 0.0;
            let mut cnt = 0.0;
            for off in -(half as isize)..=(half as isize) {
                let idx = k as isize + off;
                let idx = if closed {
                    idx.rem_euclid(m as isize) as usize
                } else if idx < 0 || idx >= n as isize {
                    continue;
                } else {
                    idx as usize
                };
                sum += values[idx];
                cnt += 1.0;
            }
            sum / cnt
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn straight(len: f64, n: usize) -> GvgEdge {
        let pts: Vec<Vec2> = (0..=n).map(|k| Vec2::new(len * k as f64 / n as f64, 0.0)).collect();
        GvgEdge::from_polyline(0, (0, 1), &pts, (Terminus::Boundary, Terminus::Boundary)).with_constant_widths(1.0, 1.0)
    }

    fn arc(radius: f64, angle: f64, n: usize) -> GvgEdge {
        let pts: Vec<Vec2> = (0..=n)
            .map(|k| {
                let th = angle * k as f64 / n as f64;
                Vec2::new(radius * th.cos(), radius * th.sin())
            })
            .collect();
        GvgEdge::from_polyline(0, (0, 1), &pts, (Terminus::Boundary, Terminus::Boundary))
    }

    #[test]
    fn normal_is_left_rotation_of_tangent() {
        let e = arc(3.0, 1.0, 50);
        for smp in &e.samples {
            assert!((smp.normal - Vec2::new(-smp.tangent.y, smp.tangent.x)).norm() == 0.0);
            assert!(smp.tangent.dot(smp.normal).abs() <= 1e-12);
            assert!((smp.tangent.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn straight_edge_projection_and_frenet() {
        let e = straight(10.0, 20);
        let (s, r) = e.project(Vec2::new(3.0, 0.4)).unwrap();
        assert!((s - 3.0).abs() < 1e-12 && (r - 0.4).abs() < 1e-12);
        let (s, r) = e.project(Vec2::new(7.25, 0.0)).unwrap();
        assert!((s - 7.25).abs() < 1e-12 && r.abs() < 1e-12);
        assert_eq!(e.frenet_point(0.0, 0.0).unwrap(), e.samples[0].position);
        let p = e.frenet_point(4.5, -0.7).unwrap();
        assert!((p - Vec2::new(4.5, -0.7)).norm() < 1e-12);
        assert!(matches!(e.frenet_point(11.0, 0.0), Err(GvgError::OutOfRange { .. })));
        assert!(matches!(e.frenet_point(1.0, 1.5), Err(GvgError::OutOfRange { .. })));
        assert!(matches!(e.project(Vec2::new(3.0, 2.0)), Err(GvgError::OutsideTube { .. })));
        assert_eq!(e.jacobian(5.0, 0.9).unwrap(), 1.0);
    }

    #[test]
    fn circle_curvature_and_jacobian() {
        let r0 = 4.0;
        let e = arc(r0, 1.2, 120);
        for smp in &e.samples {
            assert!((smp.curvature - 1.0 / r0).abs() < 1e-9);
        }
        let j = e.jacobian(e.length / 2.0, r0 / 2.0).unwrap();
        assert!((j - 0.5).abs() < 1e-9);
        assert!(matches!(e.jacobian(1.0, r0), Err(GvgError::FoldedTube { .. })));
    }

    #[test]
    fn arc_round_trip() {
        let e = arc(5.0, 2.0, 200).with_constant_widths(2.0, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let s = rng.random_range(0.0..e.length);
            let r = rng.random_range(-1.5..2.0);
            let q = e.frenet_point(s, r).unwrap();
            let (s2, r2) = e.project(q).unwrap();
            assert!((s - s2).abs() < 1e-9 && (r - r2).abs() < 1e-9, "{s} {r} -> {s2} {r2}");
            assert!(e.frenet_point(s2, r2).unwrap().dist(q) < 1e-9);
        }
    }

    #[test]
    fn projection_gradient_matches_finite_difference() {
        let e = arc(5.0, 2.0, 200).with_constant_widths(2.0, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let s = rng.random_range(0.5..e.length - 0.5);
            let r = rng.random_range(-1.4..1.9);
            let q = e.frenet_point(s, r).unwrap();
            let p = e.projection(q);
            let g = e.projection_gradient(q, &p);
            let h = 1e-7;
            let sx = |d: Vec2| e.projection(q + d).s;
            let fd = Vec2::new(
                (sx(Vec2::new(h, 0.0)) - sx(Vec2::new(-h, 0.0))) / (2.0 * h),
                (sx(Vec2::new(0.0, h)) - sx(Vec2::new(0.0, -h))) / (2.0 * h),
            );
            assert!((g - fd).norm() < 1e-5 * (1.0 + g.norm()), "{g:?} vs {fd:?}");
        }
    }

    #[test]
    fn clip_keeps_jacobian_positive() {
        let (lo, hi) = clip_range(-3.0, 3.0, 0.5);
        assert_eq!(lo, -3.0);
        assert!(1.0 - hi * 0.5 >= FOLD_TOL * 0.999);
        let (lo, hi) = clip_range(-3.0, 3.0, -0.5);
        assert_eq!(hi, 3.0);
        assert!(1.0 - lo * -0.5 >= FOLD_TOL * 0.999);
    }

    #[test]
    fn smoothing_preserves_constants() {
        let v = vec![2.0; 9];
        assert_eq!(smooth(&v, 5, false), v);
        let w = smooth(&[0.0, 0.0, 5.0, 0.0, 0.0], 5, false);
        assert!((w[2] - 1.0).abs() < 1e-15);
    }
}
