//! Procedural scene templates built from planar rectangles.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::SemanticClass;

pub const WALL_HEIGHT_M: f64 = 2.5;
/// Minimum distance between a walkable waypoint and any wall or obstacle.
pub const WAYPOINT_CLEARANCE_M: f64 = 0.3;

const MIN_WIDTH_M: f64 = 0.8;
const STAIR_TREAD_M: f64 = 0.3;
const STAIR_RISE_M: f64 = 0.17;
const STAIR_STEPS: usize = 10;
const Y_FORK_ANGLE_RAD: f64 = 35.0 * std::f64::consts::PI / 180.0;

/// Planar rectangle: `center ± half_u·u ± half_v·v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surface {
    pub center: Vector3<f64>,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
    pub half_u: f64,
    pub half_v: f64,
    pub class: SemanticClass,
}

impl Surface {
    /// Vertical rectangle standing on the segment `a → b` from `z0` up `height`.
    pub fn vertical(a: Vector2<f64>, b: Vector2<f64>, z0: f64, height: f64, class: SemanticClass) -> Self {
        let d = b - a;
        let len = d.norm();
        let u = Vector3::new(d.x / len, d.y / len, 0.0);
        let mid = (a + b) / 2.0;
        Self {
            center: Vector3::new(mid.x, mid.y, z0 + height / 2.0),
            u,
            v: Vector3::z(),
            half_u: len / 2.0,
            half_v: height / 2.0,
            class,
        }
    }

    /// Horizontal rectangle of the given half extents, rotated by `yaw`.
    pub fn horizontal(center: Vector2<f64>, yaw: f64, half_len: f64, half_wid: f64, z: f64, class: SemanticClass) -> Self {
        Self {
            center: Vector3::new(center.x, center.y, z),
            u: Vector3::new(yaw.cos(), yaw.sin(), 0.0),
            v: Vector3::new(-yaw.sin(), yaw.cos(), 0.0),
            half_u: half_len,
            half_v: half_wid,
            class,
        }
    }

    /// Axis-aligned horizontal rectangle spanning [x0, x1] × [y0, y1].
    pub fn floor_box(x0: f64, x1: f64, y0: f64, y1: f64, z: f64, class: SemanticClass) -> Self {
        Self::horizontal(
            Vector2::new((x0 + x1) / 2.0, (y0 + y1) / 2.0),
            0.0,
            (x1 - x0).abs() / 2.0,
            (y1 - y0).abs() / 2.0,
            z,
            class,
        )
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.u.cross(&self.v)
    }

    pub fn is_vertical(&self) -> bool {
        self.normal().z.abs() < 1e-9
    }

    pub fn is_horizontal(&self) -> bool {
        self.normal().z.abs() > 1.0 - 1e-9
    }

    /// Ray parameter of the first hit, for rays `origin + t·dir`, t > 0.
    #[inline]
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let n = self.normal();
        let denom = dir.dot(&n);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.center - origin).dot(&n) / denom;
        if t <= 1e-9 {
            return None;
        }
        let rel = origin + dir * t - self.center;
        if rel.dot(&self.u).abs() <= self.half_u && rel.dot(&self.v).abs() <= self.half_v {
            Some(t)
        } else {
            None
        }
    }

    pub fn corners(&self) -> [Vector3<f64>; 4] {
        let a = self.u * self.half_u;
        let b = self.v * self.half_v;
        [self.center - a - b, self.center + a - b, self.center + a + b, self.center - a + b]
    }

    /// Ground-plane segment occupied by a vertical surface.
    pub fn footprint(&self) -> (Vector2<f64>, Vector2<f64>) {
        let c = self.center.xy();
        let u = self.u.xy() * self.half_u;
        (c - u, c + u)
    }

    fn contains_xy(&self, p: &Vector2<f64>) -> bool {
        let rel = Vector3::new(p.x - self.center.x, p.y - self.center.y, 0.0);
        rel.dot(&self.u).abs() <= self.half_u + 1e-9 && rel.dot(&self.v).abs() <= self.half_v + 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Template {
    Corridor,
    TFork,
    YFork,
    Stairwell,
    RoomWithObstacles,
}

impl Template {
    pub const ALL: [Template; 5] = [
        Template::Corridor,
        Template::TFork,
        Template::YFork,
        Template::Stairwell,
        Template::RoomWithObstacles,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::Corridor => "corridor",
            Template::TFork => "t_fork",
            Template::YFork => "y_fork",
            Template::Stairwell => "stairwell",
            Template::RoomWithObstacles => "room_with_obstacles",
        }
    }

    /// Template-specific default dimensions.
    pub fn default_dimensions(self) -> Dimensions {
        match self {
            Template::Corridor => Dimensions { length: 20.0, width: 2.0, branch: 0.0 },
            Template::TFork => Dimensions { length: 10.0, width: 2.0, branch: 7.0 },
            Template::YFork => Dimensions { length: 10.0, width: 2.0, branch: 8.0 },
            Template::Stairwell => Dimensions { length: 20.0, width: 2.0, branch: 0.0 },
            Template::RoomWithObstacles => Dimensions { length: 18.0, width: 8.0, branch: 0.0 },
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Template::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Spec(format!("unknown template {s:?}")))
    }
}

/// Scene dimensions in meters.
///
/// * corridor: `length` × `width` (length ≥ 4).
/// * t_fork / y_fork: stem `length` (≥ 4), corridor `width`, `branch` length (≥ 3).
/// * stairwell: total `length` (≥ 8) including a ten-step flight starting 4 m in.
/// * room_with_obstacles: `length` (≥ 6) × `width` (≥ 3).
///
/// Every template requires `width ≥ 0.8`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dimensions {
    pub length: f64,
    pub width: f64,
    pub branch: f64,
}

/// Scene request. The seed jitters lengths by up to ±10% and places obstacles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub template: Template,
    pub dimensions: Dimensions,
    /// Only meaningful for `room_with_obstacles`; must be 0 elsewhere.
    pub obstacle_count: usize,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(template: Template, seed: u64) -> Self {
        Self {
            template,
            dimensions: template.default_dimensions(),
            obstacle_count: if template == Template::RoomWithObstacles { 4 } else { 0 },
            seed,
        }
    }

    pub fn id(&self) -> String {
        format!("{}-{}", self.template, self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dimensions;
        let fail = |msg: String| Err(Error::Spec(format!("{}: {msg}", self.template)));
        if !(d.width >= MIN_WIDTH_M) {
            return fail(format!("width {} m is narrower than {MIN_WIDTH_M} m", d.width));
        }
        let min_len = match self.template {
            Template::Corridor | Template::TFork | Template::YFork => 4.0,
            Template::Stairwell => 8.0,
            Template::RoomWithObstacles => 6.0,
        };
        if !(d.length >= min_len) {
            return fail(format!("length {} m below {min_len} m", d.length));
        }
        if matches!(self.template, Template::TFork | Template::YFork) && !(d.branch >= 3.0) {
            return fail(format!("branch {} m below 3 m", d.branch));
        }
        if self.template == Template::RoomWithObstacles {
            if d.width < 3.0 {
                return fail(format!("room width {} m below 3 m", d.width));
            }
        } else if self.obstacle_count > 0 {
            return fail("obstacles are only supported in room_with_obstacles".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    pub width: f64,
}

/// Walkable waypoints on the ground plane.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WaypointGraph {
    pub nodes: Vec<Vector2<f64>>,
    pub edges: Vec<GraphEdge>,
}

impl WaypointGraph {
    fn add_node(&mut self, p: Vector2<f64>) -> usize {
        self.nodes.push(p);
        self.nodes.len() - 1
    }

    fn add_edge(&mut self, a: usize, b: usize, width: f64) {
        self.edges.push(GraphEdge { a, b, width });
    }

    /// Adds nodes from `from` (exclusive) to `to` (inclusive) about 1 m apart.
    fn chain(&mut self, from: usize, to: Vector2<f64>, width: f64) -> usize {
        let start = self.nodes[from];
        let n = ((to - start).norm() / 1.0).ceil().max(1.0) as usize;
        let mut prev = from;
        for i in 1..=n {
            let p = start + (to - start) * (i as f64 / n as f64);
            let id = self.add_node(p);
            self.add_edge(prev, id, width);
            prev = id;
        }
        prev
    }

    pub fn neighbors(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (ei, e) in self.edges.iter().enumerate() {
            adj[e.a].push((e.b, ei));
            adj[e.b].push((e.a, ei));
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        self.component_of(0).iter().all(|v| *v)
    }

    fn component_of(&self, start: usize) -> Vec<bool> {
        let adj = self.neighbors();
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(n) = stack.pop() {
            for &(m, _) in &adj[n] {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        seen
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    pub surfaces: Vec<Surface>,
    pub graph: WaypointGraph,
    /// Node where walks begin.
    pub start: usize,
    /// Candidate goal nodes; forks offer one per branch.
    pub exits: Vec<usize>,
    pub bounds_min: Vector3<f64>,
    pub bounds_max: Vector3<f64>,
}

impl Scene {
    pub fn id(&self) -> String {
        self.spec.id()
    }

    pub fn count(&self, class: SemanticClass) -> usize {
        self.surfaces.iter().filter(|s| s.class == class).count()
    }

    /// Human-readable manifest: template, seed and surface counts per class.
    pub fn manifest(&self) -> String {
        let mut counts: BTreeMap<&'static str, usize> = BTreeMap::new();
        for s in &self.surfaces {
            *counts.entry(s.class.name()).or_default() += 1;
        }
        let mut out = format!(
            "scene {}\ntemplate {}\nseed {}\nsurfaces {}\nwaypoints {}\nexits {}\n",
            self.id(),
            self.spec.template,
            self.spec.seed,
            self.surfaces.len(),
            self.graph.nodes.len(),
            self.exits.len()
        );
        for (name, n) in counts {
            out.push_str(&format!("  {name} {n}\n"));
        }
        out
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.bounds_min[i] && p[i] <= self.bounds_max[i])
    }

    /// Height of the highest walkable horizontal surface under (x, y).
    pub fn floor_height(&self, p: &Vector2<f64>) -> Option<f64> {
        self.surfaces
            .iter()
            .filter(|s| {
                s.is_horizontal()
                    && matches!(
                        s.class,
                        SemanticClass::NormalGround | SemanticClass::Stair | SemanticClass::RoughGround
                    )
                    && s.contains_xy(p)
            })
            .map(|s| s.center.z)
            .fold(None, |acc: Option<f64>, z| Some(acc.map_or(z, |a| a.max(z))))
    }

    fn blocking(&self) -> impl Iterator<Item = &Surface> {
        self.surfaces
            .iter()
            .filter(|s| s.is_vertical() && matches!(s.class, SemanticClass::Wall | SemanticClass::Obstacle))
    }

    /// Horizontal distance from `p` to the nearest wall or obstacle.
    pub fn clearance(&self, p: &Vector2<f64>) -> f64 {
        self.blocking()
            .map(|s| {
                let (a, b) = s.footprint();
                point_segment_distance(p, &a, &b)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Horizontal distance from the segment `a → b` to the nearest wall or obstacle.
    pub fn segment_clearance(&self, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
        self.blocking()
            .map(|s| {
                let (c, d) = s.footprint();
                segment_segment_distance(a, b, &c, &d)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn point_segment_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + d * t)).norm()
}

fn cross2(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

pub fn segment_segment_distance(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>, d: &Vector2<f64>) -> f64 {
    let r = b - a;
    let s = d - c;
    let denom = cross2(&r, &s);
    if denom.abs() > 1e-12 {
        let t = cross2(&(c - a), &s) / denom;
        let u = cross2(&(c - a), &r) / denom;
        if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
            return 0.0;
        }
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

fn v2(x: f64, y: f64) -> Vector2<f64> {
    Vector2::new(x, y)
}

/// Builds the scene described by `spec`; identical specs give identical scenes.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5CE4_E5EE_D000_0000);
    let jitter = |rng: &mut ChaCha8Rng, x: f64| x * (1.0 + rng.gen_range(-0.1..0.1));
    let d = spec.dimensions;
    let length = jitter(&mut rng, d.length);
    let branch = jitter(&mut rng, d.branch);
    let w = d.width;
    let hw = w / 2.0;
    let mut surfaces = Vec::new();
    let mut graph = WaypointGraph::default();
    let wall = |a: Vector2<f64>, b: Vector2<f64>| Surface::vertical(a, b, 0.0, WALL_HEIGHT_M, SemanticClass::Wall);
    let (start, exits) = match spec.template {
        Template::Corridor => {
            surfaces.push(Surface::floor_box(0.0, length, -hw, hw, 0.0, SemanticClass::NormalGround));
            surfaces.push(wall(v2(0.0, hw), v2(length, hw)));
            surfaces.push(wall(v2(0.0, -hw), v2(length, -hw)));
            let s = graph.add_node(v2(0.5, 0.0));
            let e = graph.chain(s, v2(length - 0.5, 0.0), w);
            (s, vec![e])
        }
        Template::TFork => {
            let outer = branch + hw;
            surfaces.push(Surface::floor_box(0.0, length, -hw, hw, 0.0, SemanticClass::NormalGround));
            surfaces.push(Surface::floor_box(length, length + w, -outer, outer, 0.0, SemanticClass::NormalGround));
            surfaces.push(wall(v2(0.0, hw), v2(length, hw)));
            surfaces.push(wall(v2(0.0, -hw), v2(length, -hw)));
            surfaces.push(wall(v2(length + w, -outer), v2(length + w, outer)));
            surfaces.push(wall(v2(length, hw), v2(length, outer)));
            surfaces.push(wall(v2(length, -outer), v2(length, -hw)));
            let s = graph.add_node(v2(0.5, 0.0));
            let j = graph.chain(s, v2(length + hw, 0.0), w);
            let left = graph.chain(j, v2(length + hw, outer - 0.5), w);
            let right = graph.chain(j, v2(length + hw, -outer + 0.5), w);
            (s, vec![left, right])
        }
        Template::YFork => {
            let th = Y_FORK_ANGLE_RAD;
            let junction = v2(length, 0.0);
            surfaces.push(Surface::floor_box(0.0, length, -hw, hw, 0.0, SemanticClass::NormalGround));
            surfaces.push(wall(v2(0.0, hw), v2(length, hw)));
            surfaces.push(wall(v2(0.0, -hw), v2(length, -hw)));
            // Inner walls meet at the apex between the branches.
            let apex = v2(length + hw / th.sin(), 0.0);
            let inner_len = (branch - hw * th.cos() / th.sin()).max(0.5);
            let s = graph.add_node(v2(0.5, 0.0));
            let j = graph.chain(s, junction, w);
            let mut exits = Vec::new();
            for side in [1.0, -1.0] {
                let dir = v2(th.cos(), side * th.sin());
                let centre = junction + dir * (branch / 2.0);
                surfaces.push(Surface::horizontal(centre, side * th, branch / 2.0, hw, 0.0, SemanticClass::NormalGround));
                let outer_start = v2(length, side * hw);
                surfaces.push(wall(outer_start, outer_start + dir * branch));
                surfaces.push(wall(apex, apex + dir * inner_len));
                exits.push(graph.chain(j, junction + dir * (branch - 0.5), w));
            }
            (s, exits)
        }
        Template::Stairwell => {
            let x0 = 4.0;
            let top = STAIR_STEPS as f64 * STAIR_RISE_M;
            let x1 = x0 + STAIR_STEPS as f64 * STAIR_TREAD_M;
            surfaces.push(Surface::floor_box(0.0, x0, -hw, hw, 0.0, SemanticClass::NormalGround));
            for i in 0..STAIR_STEPS {
                let xa = x0 + i as f64 * STAIR_TREAD_M;
                let z = (i + 1) as f64 * STAIR_RISE_M;
                surfaces.push(Surface::vertical(v2(xa, hw), v2(xa, -hw), z - STAIR_RISE_M, STAIR_RISE_M, SemanticClass::Stair));
                surfaces.push(Surface::floor_box(xa, xa + STAIR_TREAD_M, -hw, hw, z, SemanticClass::Stair));
            }
            surfaces.push(Surface::floor_box(x1, length, -hw, hw, top, SemanticClass::NormalGround));
            surfaces.push(Surface::vertical(v2(0.0, hw), v2(length, hw), 0.0, WALL_HEIGHT_M + top, SemanticClass::Wall));
            surfaces.push(Surface::vertical(v2(0.0, -hw), v2(length, -hw), 0.0, WALL_HEIGHT_M + top, SemanticClass::Wall));
            let s = graph.add_node(v2(0.5, 0.0));
            let e = graph.chain(s, v2(length - 0.5, 0.0), w);
            (s, vec![e])
        }
        Template::RoomWithObstacles => return build_room(spec, length, w, &mut rng),
    };
    finish(spec, surfaces, graph, start, exits)
}

fn finish(spec: &SceneSpec, surfaces: Vec<Surface>, graph: WaypointGraph, start: usize, exits: Vec<usize>) -> Result<Scene> {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for s in &surfaces {
        for c in s.corners() {
            lo = lo.inf(&c);
            hi = hi.sup(&c);
        }
    }
    hi.z = hi.z.max(lo.z + 3.0);
    let scene = Scene {
        spec: *spec,
        surfaces,
        graph,
        start,
        exits,
        bounds_min: lo,
        bounds_max: hi,
    };
    for (i, n) in scene.graph.nodes.iter().enumerate() {
        let c = scene.clearance(n);
        if c < WAYPOINT_CLEARANCE_M - 1e-9 {
            return Err(Error::Spec(format!("waypoint {i} only {c:.3} m from a wall")));
        }
    }
    if !scene.graph.is_connected() {
        return Err(Error::Spec("waypoint graph is disconnected".into()));
    }
    Ok(scene)
}

fn build_room(spec: &SceneSpec, length: f64, w: f64, rng: &mut ChaCha8Rng) -> Result<Scene> {
    let hw = w / 2.0;
    let start_p = v2(0.7, 0.0);
    let exit_p = v2(length - 0.7, 0.0);
    for _attempt in 0..64 {
        let mut surfaces = vec![Surface::floor_box(0.0, length, -hw, hw, 0.0, SemanticClass::NormalGround)];
        let corners = [v2(0.0, -hw), v2(length, -hw), v2(length, hw), v2(0.0, hw)];
        for i in 0..4 {
            surfaces.push(Surface::vertical(corners[i], corners[(i + 1) % 4], 0.0, WALL_HEIGHT_M, SemanticClass::Wall));
        }
        let mut centres: Vec<Vector2<f64>> = Vec::new();
        for _ in 0..spec.obstacle_count {
            for _try in 0..100 {
                let size = rng.gen_range(0.4..0.9);
                let c = v2(rng.gen_range(1.8..length - 1.8), rng.gen_range(-hw + 0.9..hw - 0.9));
                if centres.iter().any(|o| (o - c).norm() < 1.6) {
                    continue;
                }
                let yaw: f64 = rng.gen_range(0.0..std::f64::consts::FRAC_PI_2);
                let height = rng.gen_range(0.5..1.2);
                let (cu, su) = (yaw.cos(), yaw.sin());
                let ex = v2(cu, su) * (size / 2.0);
                let ey = v2(-su, cu) * (size / 2.0);
                let box_corners = [c - ex - ey, c + ex - ey, c + ex + ey, c - ex + ey];
                for k in 0..4 {
                    surfaces.push(Surface::vertical(box_corners[k], box_corners[(k + 1) % 4], 0.0, height, SemanticClass::Obstacle));
                }
                surfaces.push(Surface::horizontal(c, yaw, size / 2.0, size / 2.0, height, SemanticClass::Obstacle));
                centres.push(c);
                break;
            }
        }
        let probe = Scene {
            spec: *spec,
            surfaces: surfaces.clone(),
            graph: WaypointGraph::default(),
            start: 0,
            exits: vec![],
            bounds_min: Vector3::zeros(),
            bounds_max: Vector3::zeros(),
        };
        // Grid of waypoints with clearance, 8-connected where the edge stays clear.
        let spacing = 0.5;
        let nx = ((length - 1.0) / spacing).floor() as usize + 1;
        let ny = ((w - 1.0) / spacing).floor() as usize + 1;
        let mut grid = vec![None; nx * ny];
        let mut graph = WaypointGraph::default();
        for iy in 0..ny {
            for ix in 0..nx {
                let p = v2(0.5 + ix as f64 * spacing, -hw + 0.5 + iy as f64 * spacing);
                if probe.clearance(&p) >= WAYPOINT_CLEARANCE_M + 0.1 {
                    grid[iy * nx + ix] = Some(graph.add_node(p));
                }
            }
        }
        for iy in 0..ny {
            for ix in 0..nx {
                let Some(a) = grid[iy * nx + ix] else { continue };
                for (dx, dy) in [(1isize, 0isize), (0, 1), (1, 1), (1, -1)] {
                    let (jx, jy) = (ix as isize + dx, iy as isize + dy);
                    if jx < 0 || jy < 0 || jx >= nx as isize || jy >= ny as isize {
                        continue;
                    }
                    let Some(b) = grid[jy as usize * nx + jx as usize] else { continue };
                    if probe.segment_clearance(&graph.nodes[a], &graph.nodes[b]) >= WAYPOINT_CLEARANCE_M {
                        graph.add_edge(a, b, spacing);
                    }
                }
            }
        }
        let nearest = |g: &WaypointGraph, p: Vector2<f64>| {
            (0..g.nodes.len()).min_by(|&i, &j| (g.nodes[i] - p).norm().total_cmp(&(g.nodes[j] - p).norm()))
        };
        let (Some(s), Some(e)) = (nearest(&graph, start_p), nearest(&graph, exit_p)) else { continue };
        let comp = graph.component_of(s);
        if !comp[e] {
            continue;
        }
        // Keep only the start's component so the graph is connected.
        let mut remap = vec![usize::MAX; graph.nodes.len()];
        let mut pruned = WaypointGraph::default();
        for (i, p) in graph.nodes.iter().enumerate() {
            if comp[i] {
                remap[i] = pruned.add_node(*p);
            }
        }
        for edge in &graph.edges {
            if comp[edge.a] {
                pruned.add_edge(remap[edge.a], remap[edge.b], edge.width);
            }
        }
        return finish(spec, surfaces, pruned, remap[s], vec![remap[e]]);
    }
    Err(Error::Spec("could not place obstacles leaving a walkable path".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = SceneSpec::new(Template::TFork, 7);
        assert_eq!(generate_scene(&spec).unwrap(), generate_scene(&spec).unwrap());
        let other = generate_scene(&SceneSpec::new(Template::TFork, 8)).unwrap();
        assert_ne!(generate_scene(&spec).unwrap(), other);
    }

    #[test]
    fn corridor_surface_counts() {
        let s = generate_scene(&SceneSpec::new(Template::Corridor, 1)).unwrap();
        assert_eq!(s.count(SemanticClass::Wall), 2);
        assert_eq!(s.count(SemanticClass::NormalGround), 1);
        assert_eq!(s.count(SemanticClass::Stair), 0);
        assert_eq!(s.surfaces.len(), 3);
    }

    #[test]
    fn stairwell_has_stairs() {
        let s = generate_scene(&SceneSpec::new(Template::Stairwell, 1)).unwrap();
        assert!(s.count(SemanticClass::Stair) >= 1);
        let top = s.floor_height(&v2(12.0, 0.0)).unwrap();
        assert!((top - 1.7).abs() < 1e-9);
        assert_eq!(s.floor_height(&v2(1.0, 0.0)), Some(0.0));
    }

    #[test]
    fn narrow_corridor_is_rejected() {
        let mut spec = SceneSpec::new(Template::Corridor, 1);
        spec.dimensions.width = 0.7;
        assert!(matches!(generate_scene(&spec), Err(Error::Spec(_))));
        let mut spec = SceneSpec::new(Template::TFork, 1);
        spec.obstacle_count = 2;
        assert!(generate_scene(&spec).is_err());
    }

    #[test]
    fn every_template_is_walkable() {
        for t in Template::ALL {
            for seed in 0..5 {
                let s = generate_scene(&SceneSpec::new(t, seed)).unwrap();
                assert!(s.graph.is_connected());
                assert!(s.graph.nodes.iter().all(|n| s.clearance(n) >= WAYPOINT_CLEARANCE_M - 1e-9));
                assert!(!s.exits.is_empty());
                assert!(s.manifest().contains(t.name()));
            }
        }
        let fork = generate_scene(&SceneSpec::new(Template::TFork, 0)).unwrap();
        assert_eq!(fork.exits.len(), 2);
        let room = generate_scene(&SceneSpec::new(Template::RoomWithObstacles, 3)).unwrap();
        assert_eq!(room.count(SemanticClass::Obstacle), 4 * 5);
    }

    #[test]
    fn ray_hits_wall_at_expected_distance() {
        let s = Surface::vertical(v2(2.0, -1.0), v2(2.0, 1.0), 0.0, 2.0, SemanticClass::Wall);
        let t = s.intersect(&Vector3::new(0.0, 0.0, 1.0), &Vector3::new(1.0, 0.0, 0.0)).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        assert!(s.intersect(&Vector3::new(0.0, 0.0, 1.0), &Vector3::new(-1.0, 0.0, 0.0)).is_none());
        assert!(s.intersect(&Vector3::new(0.0, 0.0, 3.0), &Vector3::new(1.0, 0.0, 0.0)).is_none());
    }

    #[test]
    fn segment_distance_cases() {
        let d = segment_segment_distance(&v2(0.0, 0.0), &v2(1.0, 1.0), &v2(0.0, 1.0), &v2(1.0, 0.0));
        assert_eq!(d, 0.0);
        let d = segment_segment_distance(&v2(0.0, 0.0), &v2(1.0, 0.0), &v2(0.0, 2.0), &v2(1.0, 2.0));
        assert!((d - 2.0).abs() < 1e-12);
    }
}
