//! Grid-based GVG extraction.
//!
//! Nearest-obstacle labels are sampled on a regular grid; every grid edge whose endpoints carry
//! different labels holds one bisector crossing, found by bisection. Crossings are linked through
//! two-label grid cells (marching squares), cells seeing three or more labels are clustered into
//! nodes, and the resulting chains become edges after arc-length resampling.

use std::collections::HashMap;

use log::{debug, warn};

use super::{GvgCell, GvgEdge, GvgError, GvgGraph, GvgNode, Terminus};
use crate::env::World;
use crate::geom::{ray_segment_hit, Vec2};

/// Tuning knobs for [`extract_gvg`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractOptions {
    /// Grid spacing in length units.
    pub resolution: f64,
    /// Crossings are bisected until the bracket is shorter than this.
    pub bisection_tol: f64,
    /// Every sample must keep at least `min_clearance_cells * resolution` from the obstacles.
    pub min_clearance_cells: f64,
}

impl ExtractOptions {
    pub fn new(resolution: f64) -> Self {
        ExtractOptions { resolution, bisection_tol: 1e-6, min_clearance_cells: 1.5 }
    }
}

struct Grid {
    lo: Vec2,
    h: f64,
    nx: usize,
    ny: usize,
    labels: Vec<usize>,
    free: Vec<bool>,
}

impl Grid {
    fn point(&self, ix: usize, iy: usize) -> Vec2 {
        self.lo + Vec2::new(ix as f64 * self.h, iy as f64 * self.h)
    }

    fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    fn cell_count(&self) -> (usize, usize) {
        (self.nx - 1, self.ny - 1)
    }

    /// Endpoints of a grid edge id.
    fn edge_ends(&self, id: usize) -> ((usize, usize), (usize, usize)) {
        let v = id / 2;
        let (ix, iy) = (v % self.nx, v / self.nx);
        if id % 2 == 0 {
            ((ix, iy), (ix + 1, iy))
        } else {
            ((ix, iy), (ix, iy + 1))
        }
    }

    /// The (up to two) grid cells sharing a grid edge.
    fn edge_cells(&self, id: usize) -> Vec<(usize, usize)> {
        let v = id / 2;
        let (ix, iy) = (v % self.nx, v / self.nx);
        let (cx, cy) = self.cell_count();
        let mut out = Vec::with_capacity(2);
        if id % 2 == 0 {
            if iy > 0 {
                out.push((ix, iy - 1));
            }
            if iy < cy {
                out.push((ix, iy));
            }
        } else {
            if ix > 0 {
                out.push((ix - 1, iy));
            }
            if ix < cx {
                out.push((ix, iy));
            }
        }
        out
    }
}

fn h_edge(g: &Grid, ix: usize, iy: usize) -> usize {
    2 * g.idx(ix, iy)
}

fn v_edge(g: &Grid, ix: usize, iy: usize) -> usize {
    2 * g.idx(ix, iy) + 1
}

struct Crossing {
    position: Vec2,
    pair: (usize, usize),
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root so cluster ids are deterministic
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

struct Chain {
    crossings: Vec<usize>,
    start: Option<usize>,
    end: Option<usize>,
    closed: bool,
}

/// Extracts the GVG of `world`. Cell masses are left at zero; see [`super::build_cells`].
pub fn extract_gvg(world: &World, opts: &ExtractOptions) -> Result<GvgGraph, GvgError> {
    let h = opts.resolution;
    if !(h.is_finite() && h > 0.0) {
        return Err(GvgError::BadResolution(h));
    }
    let grid = sample_labels(world, h);
    if grid.nx < 3 || grid.ny < 3 {
        return Err(GvgError::ResolutionTooCoarse {
            resolution: h,
            detail: "grid has fewer than three points per axis".into(),
        });
    }
    let components = free_components(&grid);
    if components > 1 {
        return Err(GvgError::DisconnectedFreeSpace { components });
    }

    let (crossings, by_edge) = find_crossings(world, &grid, opts)?;
    let (cx, cy) = grid.cell_count();
    let mut links: Vec<Vec<usize>> = vec![Vec::new(); crossings.len()];
    let mut node_cell = vec![false; cx * cy];
    for iy in 0..cy {
        for ix in 0..cx {
            classify_cell(world, &grid, ix, iy, &by_edge, &mut links, &mut node_cell);
        }
    }

    let mut uf = UnionFind::new(cx * cy);
    for iy in 0..cy {
        for ix in 0..cx {
            if !node_cell[iy * cx + ix] {
                continue;
            }
            for (dx, dy) in [(1isize, 0isize), (0, 1), (1, 1), (-1, 1)] {
                let (jx, jy) = (ix as isize + dx, iy as isize + dy);
                if jx < 0 || jy < 0 || jx >= cx as isize || jy >= cy as isize {
                    continue;
                }
                let j = jy as usize * cx + jx as usize;
                if node_cell[j] {
                    uf.union(iy * cx + ix, j);
                }
            }
        }
    }

    // which cluster a dangling crossing attaches to
    let edge_of: Vec<usize> = {
        let mut v = vec![0; crossings.len()];
        for (&e, &c) in &by_edge {
            v[c] = e;
        }
        v
    };
    let mut attach = |c: usize| -> Option<usize> {
        grid.edge_cells(edge_of[c]).into_iter().map(|(ix, iy)| iy * cx + ix).find(|&k| node_cell[k]).map(|k| uf.find(k))
    };

    let chains = trace_chains(&links, &mut attach);
    let chains: Vec<Chain> = chains
        .into_iter()
        .filter(|ch| {
            let len = polyline_length(ch.crossings.iter().map(|&c| crossings[c].position));
            let keep = !(ch.start.is_some() && ch.start == ch.end && len < 3.0 * h)
                && !(ch.crossings.len() < 2 && !ch.closed && ch.start.is_none() && ch.end.is_none());
            if !keep {
                debug!("dropping short chain of {} crossings", ch.crossings.len());
            }
            keep
        })
        .collect();

    // nodes: one per cluster that still has chains attached
    let mut cluster_ids: Vec<usize> = chains.iter().flat_map(|c| [c.start, c.end]).flatten().collect();
    cluster_ids.sort_unstable();
    cluster_ids.dedup();
    let mut cluster_cells: HashMap<usize, Vec<usize>> = HashMap::new();
    for k in 0..cx * cy {
        if node_cell[k] {
            let r = uf.find(k);
            if cluster_ids.binary_search(&r).is_ok() {
                cluster_cells.entry(r).or_default().push(k);
            }
        }
    }
    let mut nodes: Vec<GvgNode> = Vec::with_capacity(cluster_ids.len());
    let mut node_of_cluster: HashMap<usize, usize> = HashMap::new();
    for &cl in &cluster_ids {
        let cells = &cluster_cells[&cl];
        let mut labels: Vec<usize> = chains
            .iter()
            .filter(|ch| ch.start == Some(cl) || ch.end == Some(cl))
            .flat_map(|ch| {
                let p = crossings[ch.crossings[0]].pair;
                [p.0, p.1]
            })
            .collect();
        labels.sort_unstable();
        labels.dedup();
        let center = cells
            .iter()
            .map(|&k| grid.point(k % cx, k / cx) + Vec2::new(0.5 * h, 0.5 * h))
            .fold(Vec2::ZERO, |a, b| a + b)
            / cells.len() as f64;
        let position = refine_node(world, center, &labels, h);
        let radius = world.distances(position).into_iter().fold(f64::INFINITY, f64::min);
        let closest_points = labels
            .iter()
            .map(|&k| world.distance_to_obstacle(position, k).map(|(_, c)| c))
            .collect::<Result<Vec<_>, _>>()?;
        let spread = labels
            .iter()
            .map(|&k| world.distance_to_obstacle(position, k).map(|(d, _)| (d - radius).abs()))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .fold(0.0, f64::max);
        if spread > 1e-6 {
            warn!("node near ({:.3}, {:.3}) is only equidistant to {spread:.2e}", position.x, position.y);
        }
        node_of_cluster.insert(cl, nodes.len());
        nodes.push(GvgNode {
            id: nodes.len(),
            position,
            radius,
            defining_obstacles: labels,
            closest_points,
            incident_edges: Vec::new(),
        });
    }

    let mut edges: Vec<GvgEdge> = Vec::with_capacity(chains.len());
    for ch in &chains {
        let pair = crossings[ch.crossings[0]].pair;
        if ch.crossings.iter().any(|&c| crossings[c].pair != pair) {
            return Err(GvgError::ResolutionTooCoarse {
                resolution: h,
                detail: "a bisector chain changes obstacle pair without a node".into(),
            });
        }
        let term = |c: Option<usize>| match c {
            Some(cl) => Terminus::Node(node_of_cluster[&cl]),
            None => Terminus::Boundary,
        };
        let endpoints = if ch.closed { (Terminus::Loop, Terminus::Loop) } else { (term(ch.start), term(ch.end)) };
        let mut pts: Vec<Vec2> = Vec::with_capacity(ch.crossings.len() + 2);
        if let Terminus::Node(n) = endpoints.0 {
            pts.push(nodes[n].position);
        }
        pts.extend(ch.crossings.iter().map(|&c| crossings[c].position));
        if let Terminus::Node(n) = endpoints.1 {
            pts.push(nodes[n].position);
        }
        if ch.closed {
            rotate_loop(&mut pts);
            pts.push(pts[0]);
        }
        let pts = resample(world, &pts, pair, 0.5 * h, ch.closed);
        if pts.len() < 2 {
            continue;
        }
        let id = edges.len();
        let mut edge = GvgEdge::from_polyline(id, pair, &pts, endpoints);
        for smp in &mut edge.samples {
            smp.clearance = world.distance_to_obstacle(smp.position, pair.0)?.0;
        }
        edges.push(edge);
    }

    for e in &edges {
        for t in [e.endpoints.0, e.endpoints.1] {
            if let Terminus::Node(n) = t {
                if !nodes[n].incident_edges.contains(&e.id) {
                    nodes[n].incident_edges.push(e.id);
                }
            }
        }
    }
    for n in &nodes {
        if n.incident_edges.len() < 3 {
            debug!("node {} has degree {}", n.id, n.incident_edges.len());
        }
    }

    for e in &mut edges {
        let lateral = lateral_segments(&nodes, e);
        set_half_widths(world, e, &lateral)?;
        truncate_folds(e);
    }

    let min_clear = opts.min_clearance_cells * h;
    for e in &edges {
        if let Some(smp) = e.samples.iter().find(|smp| smp.clearance < min_clear) {
            return Err(GvgError::ResolutionTooCoarse {
                resolution: h,
                detail: format!(
                    "clearance {:.4} at ({:.3}, {:.3}) spans fewer than three grid cells",
                    smp.clearance, smp.position.x, smp.position.y
                ),
            });
        }
    }

    let cells = cell_neighbors(&edges);
    Ok(GvgGraph { nodes, edges, cells, grid_resolution: h, total_mass: 0.0 })
}

fn sample_labels(world: &World, h: f64) -> Grid {
    let (lo, hi) = world.bbox();
    let nx = ((hi.x - lo.x) / h).ceil() as usize + 1;
    let ny = ((hi.y - lo.y) / h).ceil() as usize + 1;
    let mut labels = Vec::with_capacity(nx * ny);
    let mut free = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let p = lo + Vec2::new(ix as f64 * h, iy as f64 * h);
            let (label, is_free) = world.nearest_label(p);
            labels.push(label);
            free.push(is_free && world.contains(p));
        }
    }
    Grid { lo, h, nx, ny, labels, free }
}

fn free_components(g: &Grid) -> usize {
    let mut seen = vec![false; g.nx * g.ny];
    let mut components = 0;
    let mut stack = Vec::new();
    for start in 0..g.nx * g.ny {
        if !g.free[start] || seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (ix, iy) = (k % g.nx, k / g.nx);
            let mut visit = |jx: usize, jy: usize| {
                let j = g.idx(jx, jy);
                if g.free[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if ix > 0 {
                visit(ix - 1, iy);
            }
            if ix + 1 < g.nx {
                visit(ix + 1, iy);
            }
            if iy > 0 {
                visit(ix, iy - 1);
            }
            if iy + 1 < g.ny {
                visit(ix, iy + 1);
            }
        }
    }
    components
}

fn find_crossings(
    world: &World,
    g: &Grid,
    opts: &ExtractOptions,
) -> Result<(Vec<Crossing>, HashMap<usize, usize>), GvgError> {
    let mut crossings = Vec::new();
    let mut by_edge = HashMap::new();
    for iy in 0..g.ny {
        for ix in 0..g.nx {
            let mut ids = Vec::with_capacity(2);
            if ix + 1 < g.nx {
                ids.push(h_edge(g, ix, iy));
            }
            if iy + 1 < g.ny {
                ids.push(v_edge(g, ix, iy));
            }
            for id in ids {
                let ((ax, ay), (bx, by)) = g.edge_ends(id);
                let (ka, kb) = (g.idx(ax, ay), g.idx(bx, by));
                let (la, lb) = (g.labels[ka], g.labels[kb]);
                if la == lb {
                    continue;
                }
                if !g.free[ka] || !g.free[kb] {
                    let p = g.point(ax, ay);
                    return Err(GvgError::ResolutionTooCoarse {
                        resolution: g.h,
                        detail: format!(
                            "bisector of obstacles {la} and {lb} passes within one grid step of an obstacle near ({:.3}, {:.3})",
                            p.x, p.y
                        ),
                    });
                }
                let pa = g.point(ax, ay);
                let pb = g.point(bx, by);
                let position = bisect(world, pa, pb, la, lb, opts.bisection_tol);
                by_edge.insert(id, crossings.len());
                crossings.push(Crossing { position, pair: (la.min(lb), la.max(lb)) });
            }
        }
    }
    Ok((crossings, by_edge))
}

/// Root of `d_a - d_b` on the segment `pa -> pb`, where `a` is nearest at `pa`.
fn bisect(world: &World, pa: Vec2, pb: Vec2, a: usize, b: usize, tol: f64) -> Vec2 {
    let f = |p: Vec2| {
        let da = world.distance_to_obstacle(p, a).map(|x| x.0).unwrap_or(0.0);
        let db = world.distance_to_obstacle(p, b).map(|x| x.0).unwrap_or(0.0);
        da - db
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let len = pa.dist(pb);
    while (hi - lo) * len > tol {
        let mid = 0.5 * (lo + hi);
        if f(pa.lerp(pb, mid)) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    pa.lerp(pb, 0.5 * (lo + hi))
}

fn classify_cell(
    world: &World,
    g: &Grid,
    ix: usize,
    iy: usize,
    by_edge: &HashMap<usize, usize>,
    links: &mut [Vec<usize>],
    node_cell: &mut [bool],
) {
    let (cx, _) = g.cell_count();
    let corners = [(ix, iy), (ix + 1, iy), (ix + 1, iy + 1), (ix, iy + 1)];
    let lab: Vec<usize> = corners.iter().map(|&(x, y)| g.labels[g.idx(x, y)]).collect();
    let mut distinct = lab.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let cell = iy * cx + ix;
    if distinct.len() >= 3 {
        node_cell[cell] = true;
        return;
    }
    if distinct.len() < 2 {
        return;
    }
    // cell edge k joins corners k and k+1
    let edge_ids = [h_edge(g, ix, iy), v_edge(g, ix + 1, iy), h_edge(g, ix, iy + 1), v_edge(g, ix, iy)];
    let crossing = |k: usize| by_edge.get(&edge_ids[k]).copied();
    let active: Vec<usize> = (0..4).filter(|&k| lab[k] != lab[(k + 1) % 4]).collect();
    let mut link = |a: usize, b: usize| {
        if let (Some(ca), Some(cb)) = (crossing(a), crossing(b)) {
            links[ca].push(cb);
            links[cb].push(ca);
        }
    };
    match active.len() {
        2 => link(active[0], active[1]),
        4 => {
            let center = g.point(ix, iy) + Vec2::new(0.5 * g.h, 0.5 * g.h);
            let lc = world.nearest_label(center).0;
            if lc == lab[0] {
                // corners 1 and 3 are cut off
                link(0, 1);
                link(2, 3);
            } else if lc == lab[1] {
                link(3, 0);
                link(1, 2);
            } else {
                node_cell[cell] = true;
            }
        }
        _ => {}
    }
}

fn trace_chains(links: &[Vec<usize>], attach: &mut impl FnMut(usize) -> Option<usize>) -> Vec<Chain> {
    let n = links.len();
    let mut visited = vec![false; n];
    let mut chains = Vec::new();
    for start in 0..n {
        if visited[start] || links[start].len() != 1 {
            continue;
        }
        let mut seq = vec![start];
        visited[start] = true;
        let mut prev = start;
        let mut cur = links[start][0];
        loop {
            if visited[cur] {
                break;
            }
            visited[cur] = true;
            seq.push(cur);
            let next = links[cur].iter().copied().find(|&x| x != prev && !visited[x]);
            match next {
                Some(nx) => {
                    prev = cur;
                    cur = nx;
                }
                None => break,
            }
        }
        let (first, last) = (seq[0], *seq.last().expect("non-empty"));
        chains.push(Chain { start: attach(first), end: attach(last), crossings: seq, closed: false });
    }
    for start in 0..n {
        if visited[start] || links[start].len() != 2 {
            continue;
        }
        let mut seq = vec![start];
        visited[start] = true;
        let mut cur = links[start][0];
        let mut prev = start;
        while !visited[cur] {
            visited[cur] = true;
            seq.push(cur);
            match links[cur].iter().copied().find(|&x| x != prev && !visited[x]) {
                Some(nx) => {
                    prev = cur;
                    cur = nx;
                }
                None => break,
            }
        }
        if seq.len() >= 3 {
            chains.push(Chain { crossings: seq, start: None, end: None, closed: true });
        }
    }
    chains
}

fn polyline_length(pts: impl Iterator<Item = Vec2>) -> f64 {
    let mut len = 0.0;
    let mut prev: Option<Vec2> = None;
    for p in pts {
        if let Some(q) = prev {
            len += p.dist(q);
        }
        prev = Some(p);
    }
    len
}

/// Starts a closed polyline at its lexicographically smallest point.
fn rotate_loop(pts: &mut [Vec2]) {
    let k =
        (0..pts.len()).min_by(|&a, &b| pts[a].x.total_cmp(&pts[b].x).then(pts[a].y.total_cmp(&pts[b].y))).unwrap_or(0);
    pts.rotate_left(k);
}

/// Gauss-Newton on `d_k - mean(d)` over the defining obstacles.
fn refine_node(world: &World, start: Vec2, labels: &[usize], h: f64) -> Vec2 {
    let mut q = start;
    if labels.len() < 2 {
        return q;
    }
    for _ in 0..60 {
        let mut d = Vec::with_capacity(labels.len());
        let mut g = Vec::with_capacity(labels.len());
        for &k in labels {
            let (dk, ck) = match world.distance_to_obstacle(q, k) {
                Ok(x) => x,
                Err(_) => return q,
            };
            d.push(dk);
            g.push((q - ck).normalized().unwrap_or(Vec2::ZERO));
        }
        let m = labels.len() as f64;
        let dbar = d.iter().sum::<f64>() / m;
        let gbar = g.iter().fold(Vec2::ZERO, |a, &b| a + b) / m;
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut worst: f64 = 0.0;
        for k in 0..labels.len() {
            let r = d[k] - dbar;
            worst = worst.max(r.abs());
            let j = g[k] - gbar;
            a11 += j.x * j.x;
            a12 += j.x * j.y;
            a22 += j.y * j.y;
            b1 -= j.x * r;
            b2 -= j.y * r;
        }
        if worst < 1e-12 {
            break;
        }
        let det = a11 * a22 - a12 * a12;
        if det.abs() < 1e-14 {
            break;
        }
        let mut step = Vec2::new((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det);
        if step.norm() > h {
            step = step * (h / step.norm());
        }
        q += step;
        if step.norm() < 1e-13 {
            break;
        }
    }
    q
}

/// Uniform arc-length resampling, each interior point pushed back onto the bisector.
fn resample(world: &World, pts: &[Vec2], pair: (usize, usize), spacing: f64, closed: bool) -> Vec<Vec2> {
    let mut cum = vec![0.0];
    for w in pts.windows(2) {
        cum.push(cum.last().copied().unwrap_or(0.0) + w[0].dist(w[1]));
    }
    let total = *cum.last().unwrap_or(&0.0);
    if total <= 0.0 {
        return Vec::new();
    }
    let n = ((total / spacing).ceil() as usize).max(2);
    let mut out = Vec::with_capacity(n + 1);
    let mut seg = 0;
    for k in 0..=n {
        let target = total * k as f64 / n as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < target {
            seg += 1;
        }
        let ds = cum[seg + 1] - cum[seg];
        let t = if ds > 0.0 { ((target - cum[seg]) / ds).clamp(0.0, 1.0) } else { 0.0 };
        out.push(pts[seg].lerp(pts[seg + 1], t));
    }
    let last = out.len() - 1;
    let (from, to) = if closed { (0, last) } else { (1, last) };
    for p in &mut out[from..to] {
        *p = onto_bisector(world, *p, pair);
    }
    if closed {
        out[last] = out[0];
    }
    // drop coincident neighbours
    let mut clean: Vec<Vec2> = Vec::with_capacity(out.len());
    for p in out {
        if clean.last().is_none_or(|q: &Vec2| q.dist(p) > 1e-9) {
            clean.push(p);
        }
    }
    if closed && clean.len() > 1 && clean[0].dist(*clean.last().expect("non-empty")) > 1e-9 {
        clean.push(clean[0]);
    }
    clean
}

fn onto_bisector(world: &World, mut q: Vec2, (a, b): (usize, usize)) -> Vec2 {
    for _ in 0..40 {
        let (Ok((da, ca)), Ok((db, cb))) = (world.distance_to_obstacle(q, a), world.distance_to_obstacle(q, b)) else {
            return q;
        };
        let f = da - db;
        if f.abs() < 1e-12 {
            break;
        }
        let ga = (q - ca).normalized().unwrap_or(Vec2::ZERO);
        let gb = (q - cb).normalized().unwrap_or(Vec2::ZERO);
        let grad = ga - gb;
        let n2 = grad.norm_sq();
        if n2 < 1e-16 {
            break;
        }
        q -= grad * (f / n2);
    }
    q
}

/// Node-to-tangency segments of the nodes at either end of `e`.
fn lateral_segments(nodes: &[GvgNode], e: &GvgEdge) -> Vec<(Vec2, Vec2)> {
    let mut segs = Vec::new();
    for t in [e.endpoints.0, e.endpoints.1] {
        if let Terminus::Node(n) = t {
            let node = &nodes[n];
            for &c in &node.closest_points {
                segs.push((node.position, c));
            }
        }
    }
    segs.dedup();
    segs
}

/// Ray-cast half-widths along both normals, cut at the lateral node segments. A ray that slips
/// past the obstacle on its side stops abreast of that obstacle's closest point.
fn set_half_widths(world: &World, e: &mut GvgEdge, lateral: &[(Vec2, Vec2)]) -> Result<(), GvgError> {
    let n = e.samples.len();
    let nudge = (1e-6 * e.length).min(1e-4);
    let (i, j) = e.obstacle_pair;
    for k in 0..n {
        let smp = e.samples[k];
        let origin = if k == 0 {
            smp.position + smp.tangent * nudge
        } else if k == n - 1 {
            smp.position - smp.tangent * nudge
        } else {
            smp.position
        };
        let ci = world.distance_to_obstacle(smp.position, i)?.1;
        let cj = world.distance_to_obstacle(smp.position, j)?.1;
        let (plus_side, minus_side) =
            if (ci - smp.position).dot(smp.normal) >= 0.0 { ((i, ci), (j, cj)) } else { ((j, cj), (i, ci)) };
        let reach = |dir: Vec2, (side, c): (usize, Vec2)| {
            let (mut t, hit) = world.ray_hit(origin, dir, 1e-9);
            if hit != Some(side) && t.is_finite() {
                let abreast = (c - origin).dot(dir);
                if abreast > 0.25 * smp.clearance {
                    t = t.min(abreast);
                }
            }
            for &(a, b) in lateral {
                if let Some(hit) = ray_segment_hit(origin, dir, a, b, 1e-9) {
                    t = t.min(hit);
                }
            }
            t.max(1e-9)
        };
        e.samples[k].eps_plus = reach(smp.normal, plus_side);
        e.samples[k].eps_minus = reach(-smp.normal, minus_side);
    }
    Ok(())
}

/// Shortens normal rays that run into the part of the tube owned by another stretch of the same
/// edge, so that every tube point has a single foot.
fn truncate_folds(e: &mut GvgEdge) {
    const STEPS: usize = 64;
    let n = e.samples.len();
    let tol = 1.5 * e.sample_spacing();
    // `q` lies on the normal line of sample `k` at offset `r`; it is owned if its projection
    // lands near the sample and recovers the offset
    let owns = |e: &GvgEdge, k: usize, q: Vec2, r: f64| {
        let p = e.projection(q);
        let ds = (p.s - e.samples[k].s).abs();
        let ds = if e.is_loop() { ds.min(e.length - ds) } else { ds };
        ds <= tol && (p.r - r).abs() <= 1e-6 * (1.0 + r.abs())
    };
    let mut widths = Vec::with_capacity(n);
    for k in 0..n {
        let smp = e.samples[k];
        let mut pair = [smp.eps_plus, smp.eps_minus];
        for ((w, dir), sign) in pair.iter_mut().zip([smp.normal, -smp.normal]).zip([1.0, -1.0]) {
            let at = |t: f64| smp.position + dir * t;
            if owns(e, k, at(*w), sign * *w) {
                continue;
            }
            let mut lo = 0.0;
            let mut hi = *w;
            for i in 1..=STEPS {
                let t = *w * i as f64 / STEPS as f64;
                if !owns(e, k, at(t), sign * t) {
                    hi = t;
                    break;
                }
                lo = t;
            }
            for _ in 0..30 {
                let mid = 0.5 * (lo + hi);
                if owns(e, k, at(mid), sign * mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            *w = lo.max(1e-9);
        }
        widths.push(pair);
    }
    for (smp, [p, m]) in e.samples.iter_mut().zip(widths) {
        smp.eps_plus = p;
        smp.eps_minus = m;
    }
}

fn cell_neighbors(edges: &[GvgEdge]) -> Vec<GvgCell> {
    let ends = |e: &GvgEdge| -> Vec<usize> {
        [e.endpoints.0, e.endpoints.1]
            .into_iter()
            .filter_map(|t| if let Terminus::Node(n) = t { Some(n) } else { None })
            .collect()
    };
    edges
        .iter()
        .map(|e| {
            let mine = ends(e);
            let neighbors = edges
                .iter()
                .filter(|o| o.id != e.id && ends(o).iter().any(|n| mine.contains(n)))
                .map(|o| o.id)
                .collect();
            GvgCell { id: e.id, edge: e.id, mass: 0.0, neighbors }
        })
        .collect()
}
