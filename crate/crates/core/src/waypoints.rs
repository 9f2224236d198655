//! Free-space roadmap sampling, Dijkstra path extraction, waypoint commands
//! and curriculum level updates.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{segment_box_distance, world_to_frame, BoxObstacle, Pose2, Vec2};
use crate::terrain::Terrain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommandParams {
    /// Free-space points sampled per graph.
    pub n_points: usize,
    /// Minimum node/edge clearance from obstacles.
    pub clearance: f64,
    pub connection_radius: f64,
    /// Paths kept after Dijkstra.
    pub n_paths: usize,
    pub l_min: f64,
    pub l_max: f64,
    /// A waypoint counts as reached inside this radius.
    pub reach_radius: f64,
}

impl Default for CommandParams {
    fn default() -> Self {
        Self {
            n_points: 2000,
            clearance: 0.75,
            connection_radius: 1.5,
            n_paths: 1500,
            l_min: 5.0,
            l_max: 12.0,
            reach_radius: 0.5,
        }
    }
}

impl CommandParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(Error::Config("n_points must be positive".into()));
        }
        if !(self.clearance >= 0.0 && self.connection_radius > 0.0 && self.reach_radius > 0.0) {
            return Err(Error::Config("clearance, connection and reach radii must be positive".into()));
        }
        if !(self.l_min >= 0.0 && self.l_min <= self.l_max) {
            return Err(Error::Config(format!("invalid length range [{}, {}]", self.l_min, self.l_max)));
        }
        Ok(())
    }
}

/// Undirected graph over free-space points with Euclidean edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeSpaceGraph {
    pub nodes: Vec<Vec2>,
    /// Sorted by neighbor index.
    pub adjacency: Vec<Vec<(usize, f64)>>,
}

impl FreeSpaceGraph {
    pub fn new(nodes: Vec<Vec2>) -> Self {
        let adjacency = vec![Vec::new(); nodes.len()];
        Self { nodes, adjacency }
    }

    /// Builds a graph from explicit weighted edges.
    pub fn from_edges(nodes: Vec<Vec2>, edges: &[(usize, usize, f64)]) -> Self {
        let mut g = Self::new(nodes);
        for &(a, b, w) in edges {
            g.add_edge(a, b, w);
        }
        g.sort_adjacency();
        g
    }

    pub fn add_edge(&mut self, a: usize, b: usize, w: f64) {
        self.adjacency[a].push((b, w));
        self.adjacency[b].push((a, w));
    }

    fn sort_adjacency(&mut self) {
        for adj in &mut self.adjacency {
            adj.sort_by(|x, y| x.0.cmp(&y.0));
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let tree = dijkstra(self, 0);
        tree.dist.iter().all(|d| d.is_finite())
    }
}

fn edge_is_clear(a: Vec2, b: Vec2, obstacles: &[BoxObstacle], clearance: f64) -> bool {
    let lo = Vec2::new(a.x.min(b.x), a.y.min(b.y));
    let hi = Vec2::new(a.x.max(b.x), a.y.max(b.y));
    obstacles.iter().all(|o| {
        let (olo, ohi) = o.bounds_at(0.0);
        let far = olo.x > hi.x + clearance
            || ohi.x < lo.x - clearance
            || olo.y > hi.y + clearance
            || ohi.y < lo.y - clearance;
        far || segment_box_distance(a, b, o, 0.0) >= clearance
    })
}

/// Samples `n_points` nodes uniformly over the terrain's free space (t = 0)
/// with at least `clearance` to every obstacle, then connects pairs closer
/// than `connection_radius` whose swept disc of radius `clearance` is free.
pub fn sample_graph(
    terrain: &Terrain,
    n_points: usize,
    clearance: f64,
    connection_radius: f64,
    seed: u64,
) -> Result<FreeSpaceGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obstacles: Vec<BoxObstacle> = terrain.obstacles().copied().collect();
    let (lo, hi) = (terrain.bounds_min, terrain.bounds_max);
    let max_attempts = n_points.saturating_mul(1000).max(1000);
    let mut nodes = Vec::with_capacity(n_points);
    let mut attempts = 0;
    while nodes.len() < n_points {
        if attempts >= max_attempts {
            return Err(Error::SamplingExhausted {
                accepted: nodes.len(),
                requested: n_points,
            });
        }
        attempts += 1;
        let p = Vec2::new(rng.gen_range(lo.x..=hi.x), rng.gen_range(lo.y..=hi.y));
        if terrain.nearest_obstacle_distance(p, 0.0) >= clearance {
            nodes.push(p);
        }
    }

    let cell = connection_radius;
    let key = |p: Vec2| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &p) in nodes.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let mut g = FreeSpaceGraph::new(nodes);
    for i in 0..g.nodes.len() {
        let p = g.nodes[i];
        let (cx, cy) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = grid.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &j in bucket.iter().filter(|&&j| j > i) {
                    let q = g.nodes[j];
                    let d = p.distance(q);
                    if d <= connection_radius && edge_is_clear(p, q, &obstacles, clearance) {
                        g.add_edge(i, j, d);
                    }
                }
            }
        }
    }
    g.sort_adjacency();
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    // Reversed: BinaryHeap is a max-heap. Equal distances pop lowest index first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest-path tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPathTree {
    pub source: usize,
    pub dist: Vec<f64>,
    pub prev: Vec<Option<usize>>,
}

impl ShortestPathTree {
    /// Node sequence from the source to `target`, or `None` if unreachable.
    pub fn path_to(&self, target: usize) -> Option<Vec<usize>> {
        if !self.dist[target].is_finite() {
            return None;
        }
        let mut path = vec![target];
        let mut cur = target;
        while let Some(p) = self.prev[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(path)
    }
}

pub fn dijkstra(g: &FreeSpaceGraph, source: usize) -> ShortestPathTree {
    let n = g.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapEntry { dist: 0.0, node: source });
    while let Some(HeapEntry { dist: d, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        for &(next, w) in &g.adjacency[node] {
            let nd = d + w;
            if nd < dist[next] {
                dist[next] = nd;
                prev[next] = Some(node);
                heap.push(HeapEntry { dist: nd, node: next });
            }
        }
    }
    ShortestPathTree { source, dist, prev }
}

/// Sequence of waypoints assigned to one system, with progress tracking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathAssignment {
    pub waypoints: Vec<Vec2>,
    pub level: usize,
    /// Index of the waypoint currently commanded; equals the number reached.
    #[serde(default)]
    pub next_index: usize,
}

impl PathAssignment {
    pub fn new(waypoints: Vec<Vec2>, level: usize) -> Self {
        Self {
            waypoints,
            level,
            next_index: 0,
        }
    }

    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    pub fn is_completed(&self) -> bool {
        self.next_index >= self.waypoints.len()
    }

    pub fn current(&self) -> Option<Vec2> {
        self.waypoints.get(self.next_index).copied()
    }

    pub fn goal(&self) -> Option<Vec2> {
        self.waypoints.last().copied()
    }

    /// Waypoints reached over total waypoints.
    pub fn reached_fraction(&self) -> f64 {
        if self.waypoints.is_empty() {
            return 1.0;
        }
        self.next_index.min(self.waypoints.len()) as f64 / self.waypoints.len() as f64
    }

    /// Marks every waypoint within `reach_radius` of `position`, in order,
    /// as reached.
    pub fn advance(&mut self, position: Vec2, reach_radius: f64) {
        while let Some(wp) = self.current() {
            if wp.distance(position) < reach_radius {
                self.next_index += 1;
            } else {
                break;
            }
        }
    }

    pub fn reset(&mut self) {
        self.next_index = 0;
    }
}

/// Returns up to `n_keep` graph-shortest paths with length in
/// `[l_min, l_max]`, sampled uniformly among qualifying ordered node pairs.
/// Each path is assigned the curriculum level of the subterrain holding its
/// start node.
pub fn shortest_paths(
    g: &FreeSpaceGraph,
    terrain: &Terrain,
    l_min: f64,
    l_max: f64,
    n_keep: usize,
    seed: u64,
) -> Vec<PathAssignment> {
    const MAX_SOURCES: usize = 5000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.len();
    let sources: Vec<usize> = if n > MAX_SOURCES {
        let mut s = rand::seq::index::sample(&mut rng, n, MAX_SOURCES).into_vec();
        s.sort_unstable();
        s
    } else {
        (0..n).collect()
    };

    // Reservoir sampling over qualifying (source, target) pairs.
    let mut kept: Vec<(usize, usize)> = Vec::with_capacity(n_keep);
    let mut seen: u64 = 0;
    for &s in &sources {
        let tree = dijkstra(g, s);
        for (t, &d) in tree.dist.iter().enumerate() {
            if t == s || !(d >= l_min && d <= l_max) {
                continue;
            }
            seen += 1;
            if kept.len() < n_keep {
                kept.push((s, t));
            } else {
                let j = rng.gen_range(0..seen);
                if (j as usize) < n_keep {
                    kept[j as usize] = (s, t);
                }
            }
        }
    }
    if kept.len() < n_keep {
        log::warn!(
            "only {} of {} requested paths fall within [{l_min}, {l_max}] m",
            kept.len(),
            n_keep
        );
    }

    let mut by_source: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &(s, _)) in kept.iter().enumerate() {
        by_source.entry(s).or_default().push(i);
    }
    let mut out: Vec<Option<PathAssignment>> = vec![None; kept.len()];
    for (s, idxs) in by_source {
        let tree = dijkstra(g, s);
        for i in idxs {
            let nodes = tree.path_to(kept[i].1).expect("target reachable");
            let waypoints: Vec<Vec2> = nodes.iter().map(|&k| g.nodes[k]).collect();
            let level = terrain.subterrain_at(waypoints[0]).map_or(0, |st| st.level);
            out[i] = Some(PathAssignment::new(waypoints, level));
        }
    }
    out.into_iter().flatten().collect()
}

/// Unit direction toward the current waypoint, expressed in the object frame.
/// Waypoints within `reach_radius` are marked reached first.
pub fn command(object_pose: &Pose2, path: &mut PathAssignment, reach_radius: f64) -> Result<Vec2> {
    path.advance(object_pose.position, reach_radius);
    let wp = path.current().ok_or(Error::PathCompleted)?;
    let delta = world_to_frame(wp, object_pose) - world_to_frame(object_pose.position, object_pose);
    delta.normalized().ok_or(Error::PathCompleted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub level: usize,
    pub max_level: usize,
}

impl CurriculumState {
    pub fn new(level: usize, n_levels: usize) -> Self {
        let max_level = n_levels.saturating_sub(1);
        Self {
            level: level.min(max_level),
            max_level,
        }
    }
}

/// Promotes on more than half of the path, demotes below a quarter; a
/// promotion past the top level reassigns a uniformly random level.
pub fn update_curriculum(state: CurriculumState, reached_fraction: f64, seed: u64) -> CurriculumState {
    let level = if reached_fraction > 0.5 {
        if state.level >= state.max_level {
            ChaCha8Rng::seed_from_u64(seed).gen_range(0..=state.max_level)
        } else {
            state.level + 1
        }
    } else if reached_fraction < 0.25 {
        state.level.saturating_sub(1)
    } else {
        state.level
    };
    CurriculumState { level, ..state }
}

const PATHS_FORMAT: &str = "carrybar-paths";

#[derive(Serialize, Deserialize)]
struct PathsFile {
    format: String,
    version: u32,
    paths: Vec<PathAssignment>,
}

pub fn paths_to_json(paths: &[PathAssignment]) -> Result<String> {
    let file = PathsFile {
        format: PATHS_FORMAT.into(),
        version: 1,
        paths: paths.iter().cloned().map(|mut p| { p.reset(); p }).collect(),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

pub fn paths_from_json(s: &str) -> Result<Vec<PathAssignment>> {
    let file: PathsFile = serde_json::from_str(s)?;
    if file.format != PATHS_FORMAT || file.version != 1 {
        return Err(Error::Parse(format!("unsupported paths file {} v{}", file.format, file.version)));
    }
    Ok(file.paths)
}

pub fn save_paths(paths: &[PathAssignment], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, paths_to_json(paths)?)?;
    Ok(())
}

pub fn load_paths(path: impl AsRef<Path>) -> Result<Vec<PathAssignment>> {
    paths_from_json(&std::fs::read_to_string(path)?)
}
