//! Goal-directed pedestrian walks over a scene's waypoint graph.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::TAU;

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layout::Scene;
use crate::error::{Error, Result};
use crate::geom::{FrameTag, Pose6D, Trajectory, STEP_S};

/// Lateral acceleration budget used to cap speed through turns.
const MAX_LATERAL_ACCEL: f64 = 1.5;
const MIN_SPEED: f64 = 0.85;
const PATH_CLEARANCE_M: f64 = 0.3;
const SHORTCUT_CLEARANCE_M: f64 = 0.45;
const HEIGHT_GRID_M: f64 = 0.02;
const HEIGHT_FILTER_M: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkerPrefs {
    /// Cruise speed is drawn uniformly from this range, then capped for turns.
    pub speed_range: (f64, f64),
    /// Each edge cost is scaled by `1 + edge_noise·U[0,1)`, drawn once per walk.
    pub edge_noise: f64,
    /// Amplitude of the slow sinusoidal speed modulation.
    pub speed_wobble: f64,
    pub max_turn_radius_m: f64,
    pub torso_height_m: f64,
}

impl Default for WalkerPrefs {
    fn default() -> Self {
        Self {
            speed_range: (0.9, 1.3),
            edge_noise: 0.3,
            speed_wobble: 0.05,
            max_turn_radius_m: 1.5,
            torso_height_m: 1.4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Line { a: Vector2<f64>, b: Vector2<f64> },
    Arc { center: Vector2<f64>, radius: f64, start: f64, sweep: f64 },
}

impl Piece {
    fn length(&self) -> f64 {
        match *self {
            Piece::Line { a, b } => (b - a).norm(),
            Piece::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    /// Position and heading at arc length `s` into the piece.
    fn eval(&self, s: f64) -> (Vector2<f64>, f64) {
        match *self {
            Piece::Line { a, b } => {
                let d = b - a;
                let len = d.norm();
                (a + d * (s / len), d.y.atan2(d.x))
            }
            Piece::Arc { center, radius, start, sweep } => {
                let ang = start + sweep.signum() * s / radius;
                let pos = center + Vector2::new(ang.cos(), ang.sin()) * radius;
                (pos, ang + sweep.signum() * std::f64::consts::FRAC_PI_2)
            }
        }
    }
}

struct Path {
    pieces: Vec<Piece>,
    cumulative: Vec<f64>,
    min_radius: f64,
}

impl Path {
    fn total(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    fn eval(&self, s: f64) -> (Vector2<f64>, f64) {
        let s = s.clamp(0.0, self.total());
        let k = self.cumulative.partition_point(|&c| c < s).clamp(1, self.pieces.len()) - 1;
        self.pieces[k].eval(s - self.cumulative[k])
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

fn dijkstra(scene: &Scene, costs: &[f64], start: usize, goal: usize) -> Option<Vec<usize>> {
    let adj = scene.graph.neighbors();
    let n = scene.graph.nodes.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[start] = 0.0;
    heap.push(Entry(0.0, start));
    while let Some(Entry(d, u)) = heap.pop() {
        if u == goal {
            break;
        }
        if d > dist[u] {
            continue;
        }
        for &(v, e) in &adj[u] {
            let nd = d + costs[e];
            if nd < dist[v] {
                dist[v] = nd;
                prev[v] = u;
                heap.push(Entry(nd, v));
            }
        }
    }
    if !dist[goal].is_finite() {
        return None;
    }
    let mut path = vec![goal];
    while *path.last().unwrap() != start {
        path.push(prev[*path.last().unwrap()]);
    }
    path.reverse();
    Some(path)
}

/// Greedy line-of-sight shortcutting followed by removal of collinear vertices.
fn simplify(scene: &Scene, pts: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut out = vec![pts[0]];
    let mut i = 0;
    while i + 1 < pts.len() {
        let mut j = pts.len() - 1;
        while j > i + 1 && scene.segment_clearance(&pts[i], &pts[j]) < SHORTCUT_CLEARANCE_M {
            j -= 1;
        }
        out.push(pts[j]);
        i = j;
    }
    let mut kept: Vec<Vector2<f64>> = vec![out[0]];
    for k in 1..out.len() {
        if k + 1 < out.len() {
            let a = out[k] - kept[kept.len() - 1];
            let b = out[k + 1] - out[k];
            if a.norm() < 1e-9 || (a.x * b.y - a.y * b.x).abs() < 1e-9 * a.norm() * b.norm() && a.dot(&b) > 0.0 {
                continue;
            }
        }
        kept.push(out[k]);
    }
    kept
}

/// Replaces every interior corner by a tangent circular arc.
fn fillet(pts: &[Vector2<f64>], max_radius: f64) -> Path {
    let mut pieces = Vec::new();
    let mut cursor = pts[0];
    let mut min_radius = f64::INFINITY;
    for i in 1..pts.len() - 1 {
        let din = pts[i] - pts[i - 1];
        let dout = pts[i + 1] - pts[i];
        let (lin, lout) = (din.norm(), dout.norm());
        let (din, dout) = (din / lin, dout / lout);
        let cross = din.x * dout.y - din.y * dout.x;
        let turn = cross.atan2(din.dot(&dout));
        if turn.abs() < 1e-9 {
            continue;
        }
        let half_tan = (turn.abs() / 2.0).tan();
        let radius = max_radius.min(0.5 * lin.min(lout) / half_tan);
        let tangent = radius * half_tan;
        let t_in = pts[i] - din * tangent;
        let t_out = pts[i] + dout * tangent;
        if (t_in - cursor).norm() > 1e-12 {
            pieces.push(Piece::Line { a: cursor, b: t_in });
        }
        let normal = Vector2::new(-din.y, din.x) * turn.signum();
        let center = t_in + normal * radius;
        let start = (t_in - center).y.atan2((t_in - center).x);
        pieces.push(Piece::Arc { center, radius, start, sweep: turn });
        min_radius = min_radius.min(radius);
        cursor = t_out;
    }
    let last = pts[pts.len() - 1];
    if (last - cursor).norm() > 1e-12 {
        pieces.push(Piece::Line { a: cursor, b: last });
    }
    let mut cumulative = vec![0.0];
    for p in &pieces {
        cumulative.push(cumulative.last().unwrap() + p.length());
    }
    Path { pieces, cumulative, min_radius }
}

fn box_filter(xs: &[f64], half: usize) -> Vec<f64> {
    let n = xs.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for k in i - half as isize..=i + half as isize {
                acc += xs[k.clamp(0, n - 1) as usize];
            }
            acc / (2 * half + 1) as f64
        })
        .collect()
}

/// Walks from `start` to one of `goals`, picked uniformly per walk.
///
/// Produces world-frame torso poses at 20 Hz. The route is a noisy shortest
/// path with filleted corners; speed is capped so lateral acceleration stays
/// within budget and height follows the smoothed floor.
pub fn simulate_walker(scene: &Scene, start: usize, goals: &[usize], prefs: &WalkerPrefs, seed: u64) -> Result<Trajectory> {
    let n = scene.graph.nodes.len();
    if start >= n || goals.is_empty() || goals.iter().any(|&g| g >= n) {
        return Err(Error::Index(format!("start {start} or goals {goals:?} outside graph of {n} nodes")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let goal = goals[rng.gen_range(0..goals.len())];
    let costs: Vec<f64> = scene
        .graph
        .edges
        .iter()
        .map(|e| (scene.graph.nodes[e.a] - scene.graph.nodes[e.b]).norm() * (1.0 + prefs.edge_noise * rng.gen::<f64>()))
        .collect();
    let cruise = rng.gen_range(prefs.speed_range.0..=prefs.speed_range.1);
    let period = rng.gen_range(3.0..6.0);
    let phase = rng.gen_range(0.0..TAU);

    let route = dijkstra(scene, &costs, start, goal)
        .ok_or_else(|| Error::Path(format!("goal {goal} unreachable from {start}")))?;
    if route.len() < 2 {
        return Err(Error::Path("start and goal coincide".into()));
    }
    let pts: Vec<Vector2<f64>> = route.iter().map(|&i| scene.graph.nodes[i]).collect();
    let pts = simplify(scene, &pts);

    let mut radius = prefs.max_turn_radius_m;
    let path = loop {
        let path = fillet(&pts, radius);
        let steps = (path.total() / 0.05).ceil() as usize;
        let clear = (0..=steps).all(|k| scene.clearance(&path.eval(k as f64 * 0.05).0) >= PATH_CLEARANCE_M);
        if clear {
            break path;
        }
        radius *= 0.5;
        if radius < 0.2 {
            return Err(Error::Path("no clear smoothed path".into()));
        }
    };

    let mut v0 = cruise;
    if path.min_radius.is_finite() {
        v0 = v0.min((MAX_LATERAL_ACCEL * path.min_radius).sqrt());
    }
    let v0 = v0.max(MIN_SPEED);
    if v0 * v0 > 1.9 * path.min_radius {
        return Err(Error::Path(format!("turn radius {:.2} m too tight", path.min_radius)));
    }

    // Smoothed floor height on an arc-length grid.
    let total = path.total();
    let grid_n = (total / HEIGHT_GRID_M).ceil() as usize + 1;
    let mut floor = Vec::with_capacity(grid_n);
    let mut last = 0.0;
    for k in 0..grid_n {
        let p = path.eval(k as f64 * HEIGHT_GRID_M).0;
        last = scene.floor_height(&p).unwrap_or(last);
        floor.push(last);
    }
    let half = (HEIGHT_FILTER_M / HEIGHT_GRID_M / 2.0).round() as usize;
    let smooth = box_filter(&box_filter(&floor, half), half);
    let height_at = |s: f64| {
        let x = (s / HEIGHT_GRID_M).clamp(0.0, (grid_n - 1) as f64);
        let i = (x.floor() as usize).min(grid_n.saturating_sub(2));
        let f = x - i as f64;
        if grid_n < 2 {
            return smooth[0];
        }
        smooth[i] * (1.0 - f) + smooth[i + 1] * f
    };
    let slope_at = |s: f64| (height_at(s + HEIGHT_GRID_M) - height_at(s - HEIGHT_GRID_M)) / (2.0 * HEIGHT_GRID_M);
    let speed_at = |t: f64| v0 + prefs.speed_wobble * (TAU * t / period + phase).sin();
    // Horizontal progress rate so the 3-D speed follows `speed_at`.
    let rate = |t: f64, s: f64| speed_at(t) / (1.0 + slope_at(s).powi(2)).sqrt();

    let substeps = 10;
    let h = STEP_S / substeps as f64;
    let mut poses = Vec::new();
    let mut s = 0.0;
    let mut k = 0usize;
    loop {
        let t = k as f64 * STEP_S;
        let (xy, heading) = path.eval(s);
        let position = Vector3::new(xy.x, xy.y, height_at(s) + prefs.torso_height_m);
        poses.push(Pose6D::new(t, position, UnitQuaternion::from_euler_angles(0.0, 0.0, heading)));
        for j in 0..substeps {
            let tj = t + j as f64 * h;
            let mid = s + 0.5 * h * rate(tj, s);
            s += h * rate(tj + 0.5 * h, mid);
        }
        k += 1;
        if s > total {
            break;
        }
    }
    Ok(Trajectory { poses, frame: FrameTag::World })
}
