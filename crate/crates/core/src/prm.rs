//! Probabilistic-roadmap baseline over full system configurations (object
//! pose plus the two relative base yaws), in a local-window or full-map
//! mode, with interpolated kinematic execution.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    angle_diff, footprint_penetration, oriented_footprint_collides, segment_box_distance, wrap_angle, BoxObstacle,
    Footprint, Pose2, Vec2,
};
use crate::reward::RewardBreakdown;
use crate::sim::{SystemParams, Twist};
use crate::terrain::Terrain;
use crate::trajectory::{FrameSample, TrajectoryRecord};
use crate::waypoints::{dijkstra, FreeSpaceGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfiguration {
    pub pose: Pose2,
    /// Base yaws relative to the object.
    pub psi: [f64; 2],
}

impl SystemConfiguration {
    pub fn new(pose: Pose2, psi: [f64; 2]) -> Self {
        Self {
            pose,
            psi: psi.map(wrap_angle),
        }
    }

    pub fn agent_poses(&self, bar_length: f64) -> [Pose2; 2] {
        let y = self.pose.y_axis() * (bar_length / 2.0);
        [
            Pose2::new(self.pose.position - y, self.pose.yaw + self.psi[0]),
            Pose2::new(self.pose.position + y, self.pose.yaw + self.psi[1]),
        ]
    }

    /// `‖Δp‖ + 0.5·(|Δyaw| + |Δψ1| + |Δψ2|)`, angles by shortest arc.
    pub fn distance(&self, o: &SystemConfiguration) -> f64 {
        self.pose.position.distance(o.pose.position)
            + 0.5
                * (angle_diff(o.pose.yaw, self.pose.yaw).abs()
                    + angle_diff(o.psi[0], self.psi[0]).abs()
                    + angle_diff(o.psi[1], self.psi[1]).abs())
    }

    /// Linear interpolation; angles along the shortest arc.
    pub fn interpolate(&self, o: &SystemConfiguration, s: f64) -> SystemConfiguration {
        let ang = |a: f64, b: f64| wrap_angle(a + s * angle_diff(b, a));
        SystemConfiguration::new(
            Pose2::new(self.pose.position.lerp(o.pose.position, s), ang(self.pose.yaw, o.pose.yaw)),
            [ang(self.psi[0], o.psi[0]), ang(self.psi[1], o.psi[1])],
        )
    }

    /// Largest displacement of the object or either agent moving to `o`.
    pub fn max_displacement(&self, o: &SystemConfiguration, bar_length: f64) -> f64 {
        let a = self.agent_poses(bar_length);
        let b = o.agent_poses(bar_length);
        self.pose
            .position
            .distance(o.pose.position)
            .max(a[0].position.distance(b[0].position))
            .max(a[1].position.distance(b[1].position))
    }

    fn max_rotation(&self, o: &SystemConfiguration) -> f64 {
        let a = self.agent_poses(1.0);
        let b = o.agent_poses(1.0);
        angle_diff(b[0].yaw, a[0].yaw)
            .abs()
            .max(angle_diff(b[1].yaw, a[1].yaw).abs())
            .max(angle_diff(o.pose.yaw, self.pose.yaw).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrmMode {
    Local,
    Full,
}

impl fmt::Display for PrmMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrmMode::Local => "local",
            PrmMode::Full => "full",
        })
    }
}

impl FromStr for PrmMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(PrmMode::Local),
            "full" => Ok(PrmMode::Full),
            _ => Err(Error::UnknownMethod(s.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrmConfig {
    pub n_samples: usize,
    pub k_neighbors: usize,
    pub n_interp: usize,
    pub mode: PrmMode,
    pub max_pose_step: f64,
    /// Local window extent along the object x-axis and y-axis.
    pub window: [f64; 2],
    pub replan_budget: usize,
    /// Execution speed limits.
    pub max_speed: f64,
    pub max_yaw_rate: f64,
    /// Greedy shortcutting of roadmap paths.
    pub shortcut: bool,
    /// Sampling attempts per requested sample before giving up.
    pub attempts_per_sample: usize,
}

impl Default for PrmConfig {
    fn default() -> Self {
        Self {
            n_samples: 1500,
            k_neighbors: 5,
            n_interp: 5,
            mode: PrmMode::Full,
            max_pose_step: 0.5,
            window: [4.0, 6.0],
            replan_budget: 200,
            max_speed: 0.8,
            max_yaw_rate: 0.8,
            shortcut: true,
            attempts_per_sample: 50,
        }
    }
}

impl PrmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < self.k_neighbors + 1 {
            return Err(Error::Config("n_samples must be at least k_neighbors + 1".into()));
        }
        if self.k_neighbors == 0 || !(self.max_pose_step > 0.0) {
            return Err(Error::Config("k_neighbors and max_pose_step must be positive".into()));
        }
        if !(self.max_speed > 0.0 && self.max_yaw_rate > 0.0 && self.window[0] > 0.0 && self.window[1] > 0.0) {
            return Err(Error::Config("speeds and window must be positive".into()));
        }
        Ok(())
    }
}

/// Collision checker against a fixed set of known obstacles at one time.
#[derive(Debug, Clone)]
pub struct Feasibility {
    pub obstacles: Vec<BoxObstacle>,
    pub bar_length: f64,
    pub footprint: Footprint,
    pub time: f64,
    /// When set, both footprints must lie inside this region: nothing is
    /// known beyond it.
    pub known_region: Option<Region>,
}

impl Feasibility {
    pub fn new(obstacles: Vec<BoxObstacle>, system: &SystemParams, time: f64) -> Self {
        Self {
            obstacles,
            bar_length: system.bar_length,
            footprint: system.footprint,
            time,
            known_region: None,
        }
    }

    pub fn check(&self, c: &SystemConfiguration) -> bool {
        let [p1, p2] = c.agent_poses(self.bar_length);
        if let Some(region) = &self.known_region {
            let corners = self.footprint.corners(&p1).into_iter().chain(self.footprint.corners(&p2));
            if !corners.into_iter().all(|q| region.contains(q)) {
                return false;
            }
        }
        !self.obstacles.iter().any(|b| {
            oriented_footprint_collides(&p1, &self.footprint, b, self.time)
                || oriented_footprint_collides(&p2, &self.footprint, b, self.time)
                || segment_box_distance(p1.position, p2.position, b, self.time) < 0.0
        })
    }
}

/// Both footprints and the bar free of every obstacle at time `t`.
pub fn feasible(c: &SystemConfiguration, terrain: &Terrain, t: f64, system: &SystemParams) -> bool {
    Feasibility::new(terrain.obstacles().copied().collect(), system, t).check(c)
}

/// The `n_interp` intermediate configurations strictly between `a` and `b`.
pub fn interpolants(a: &SystemConfiguration, b: &SystemConfiguration, n_interp: usize) -> Vec<SystemConfiguration> {
    (1..=n_interp)
        .map(|k| a.interpolate(b, k as f64 / (n_interp + 1) as f64))
        .collect()
}

/// Splits `a → b` into pieces moving no body more than `max_step`;
/// returns the piece endpoints after `a`, ending with `b`.
pub fn subdivide(a: &SystemConfiguration, b: &SystemConfiguration, max_step: f64, bar_length: f64) -> Vec<SystemConfiguration> {
    let n = (a.max_displacement(b, bar_length) / max_step).ceil().max(1.0) as usize;
    (1..=n)
        .map(|k| if k == n { *b } else { a.interpolate(b, k as f64 / n as f64) })
        .collect()
}

/// Every configuration visited when executing `a → b`, excluding `a`.
fn edge_configs(a: &SystemConfiguration, b: &SystemConfiguration, cfg: &PrmConfig, bar_length: f64) -> Vec<SystemConfiguration> {
    let mut out = Vec::new();
    let mut prev = *a;
    for next in subdivide(a, b, cfg.max_pose_step, bar_length) {
        out.extend(interpolants(&prev, &next, cfg.n_interp));
        out.push(next);
        prev = next;
    }
    out
}

/// True when every interpolated configuration along `a -> b` passes `f`.
pub fn edge_valid(a: &SystemConfiguration, b: &SystemConfiguration, cfg: &PrmConfig, f: &Feasibility) -> bool {
    edge_configs(a, b, cfg, f.bar_length).iter().all(|c| f.check(c))
}

/// Where configurations are sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    /// Axis-aligned rectangle.
    Rect { min: Vec2, max: Vec2 },
    /// Rectangle centered on and oriented with `frame`.
    Window { frame: Pose2, half_extents: Vec2 },
}

impl Region {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec2 {
        match *self {
            Region::Rect { min, max } => Vec2::new(rng.gen_range(min.x..=max.x), rng.gen_range(min.y..=max.y)),
            Region::Window { frame, half_extents } => {
                let local = Vec2::new(
                    rng.gen_range(-half_extents.x..=half_extents.x),
                    rng.gen_range(-half_extents.y..=half_extents.y),
                );
                crate::geometry::frame_to_world(local, &frame)
            }
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        match *self {
            Region::Rect { min, max } => p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y,
            Region::Window { frame, half_extents } => {
                let l = crate::geometry::world_to_frame(p, &frame);
                l.x.abs() <= half_extents.x && l.y.abs() <= half_extents.y
            }
        }
    }

    /// Obstacles touching the region at time `t`.
    pub fn visible_obstacles(&self, terrain: &Terrain, t: f64) -> Vec<BoxObstacle> {
        match *self {
            Region::Rect { .. } => terrain.obstacles().copied().collect(),
            Region::Window { frame, half_extents } => {
                let fp = Footprint {
                    half_length: half_extents.x,
                    half_width: half_extents.y,
                };
                terrain
                    .obstacles()
                    .filter(|b| footprint_penetration(&frame, &fp, b, t) > 0.0)
                    .copied()
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Roadmap {
    pub nodes: Vec<SystemConfiguration>,
    pub graph: FreeSpaceGraph,
    pub feasibility: Feasibility,
    pub cfg: PrmConfig,
}

impl Roadmap {
    pub fn n_edges(&self) -> usize {
        self.graph.n_edges()
    }

    /// Adds a configuration, connected to its `k` nearest nodes by valid
    /// edges. Returns its index.
    pub fn insert(&mut self, c: SystemConfiguration) -> usize {
        let i = self.nodes.len();
        self.nodes.push(c);
        self.graph.nodes.push(c.pose.position);
        self.graph.adjacency.push(Vec::new());
        for j in self.nearest(i) {
            if edge_valid(&self.nodes[i], &self.nodes[j], &self.cfg, &self.feasibility) {
                let w = self.nodes[i].distance(&self.nodes[j]);
                self.graph.add_edge(i, j, w);
            }
        }
        i
    }

    fn nearest(&self, i: usize) -> Vec<usize> {
        let c = &self.nodes[i];
        let mut d: Vec<(f64, usize)> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, o)| (c.distance(o), j))
            .collect();
        let k = self.cfg.k_neighbors.min(d.len());
        if k == 0 {
            return Vec::new();
        }
        d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.truncate(k);
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.into_iter().map(|(_, j)| j).collect()
    }
}

/// Samples `n_samples` feasible configurations in `region` (yaws uniform)
/// and connects each to its `k` nearest neighbors.
pub fn build_roadmap(region: Region, feasibility: Feasibility, cfg: &PrmConfig, seed: u64) -> Result<Roadmap> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(cfg.n_samples);
    let max_attempts = cfg.n_samples * cfg.attempts_per_sample;
    let mut attempts = 0;
    let angle = |rng: &mut ChaCha8Rng| wrap_angle(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
    while nodes.len() < cfg.n_samples && attempts < max_attempts {
        attempts += 1;
        let pos = region.sample(&mut rng);
        let c = SystemConfiguration::new(Pose2::new(pos, angle(&mut rng)), [angle(&mut rng), angle(&mut rng)]);
        if feasibility.check(&c) {
            nodes.push(c);
        }
    }
    if nodes.is_empty() {
        return Err(Error::Planning("no feasible samples".into()));
    }
    let mut map = Roadmap {
        graph: FreeSpaceGraph::new(nodes.iter().map(|c| c.pose.position).collect()),
        nodes,
        feasibility,
        cfg: cfg.clone(),
    };
    for i in 0..map.nodes.len() {
        for j in map.nearest(i) {
            if j < i && map.graph.adjacency[j].iter().any(|&(n, _)| n == i) {
                continue;
            }
            if map.graph.adjacency[i].iter().any(|&(n, _)| n == j) {
                continue;
            }
            if edge_valid(&map.nodes[i], &map.nodes[j], cfg, &map.feasibility) {
                let w = map.nodes[i].distance(&map.nodes[j]);
                map.graph.add_edge(i, j, w);
            }
        }
    }
    Ok(map)
}

/// Goal configuration candidates at `goal`, approaching from `from`.
fn goal_candidates(from: &SystemConfiguration, goal: Vec2) -> Vec<SystemConfiguration> {
    let mut yaws = vec![from.pose.yaw];
    if let Some(d) = (goal - from.pose.position).normalized() {
        let a = d.angle();
        yaws.extend([a - std::f64::consts::FRAC_PI_2, a + std::f64::consts::FRAC_PI_2, a]);
    }
    let mut out: Vec<SystemConfiguration> = yaws
        .iter()
        .map(|&y| SystemConfiguration::new(Pose2::new(goal, y), from.psi))
        .collect();
    for k in 0..16 {
        let y = k as f64 * std::f64::consts::PI / 8.0;
        out.push(SystemConfiguration::new(Pose2::new(goal, y), [0.0, 0.0]));
    }
    out
}

/// Result of planning one leg.
#[derive(Debug, Clone, PartialEq)]
pub struct LegPlan {
    /// Configurations from start to the reached node, consecutive ones no
    /// more than `max_pose_step` apart.
    pub configs: Vec<SystemConfiguration>,
    /// Distance from the final configuration to the requested goal.
    pub goal_distance: f64,
}

fn shortcut(path: &[SystemConfiguration], cfg: &PrmConfig, f: &Feasibility) -> Vec<SystemConfiguration> {
    let mut out = vec![path[0]];
    let mut i = 0;
    while i + 1 < path.len() {
        let mut j = path.len() - 1;
        while j > i + 1 && !edge_valid(&path[i], &path[j], cfg, f) {
            j -= 1;
        }
        out.push(path[j]);
        i = j;
    }
    out
}

/// Shortest roadmap path from node `start` to the reachable node closest
/// (in position) to `goal`.
pub fn plan_from(map: &Roadmap, start: usize, goal: Vec2) -> LegPlan {
    let tree = dijkstra(&map.graph, start);
    let target = (0..map.nodes.len())
        .filter(|&i| tree.dist[i].is_finite())
        .min_by(|&a, &b| {
            let da = map.nodes[a].pose.position.distance(goal);
            let db = map.nodes[b].pose.position.distance(goal);
            da.total_cmp(&db).then(tree.dist[a].total_cmp(&tree.dist[b])).then(a.cmp(&b))
        })
        .unwrap_or(start);
    let ids = tree.path_to(target).unwrap_or_else(|| vec![start]);
    let mut path: Vec<SystemConfiguration> = ids.iter().map(|&i| map.nodes[i]).collect();
    if map.cfg.shortcut && path.len() > 2 {
        path = shortcut(&path, &map.cfg, &map.feasibility);
    }
    let mut configs = vec![path[0]];
    for w in path.windows(2) {
        configs.extend(subdivide(&w[0], &w[1], map.cfg.max_pose_step, map.feasibility.bar_length));
    }
    let goal_distance = configs.last().map_or(f64::INFINITY, |c| c.pose.position.distance(goal));
    LegPlan { configs, goal_distance }
}

/// Inserts `start` and a feasible goal configuration into the roadmap and
/// plans between them.
pub fn plan(start: &SystemConfiguration, goal: Vec2, map: &mut Roadmap) -> Result<LegPlan> {
    if !map.feasibility.check(start) {
        return Err(Error::StartInCollision);
    }
    let s = map.insert(*start);
    if let Some(g) = goal_candidates(start, goal).into_iter().find(|c| map.feasibility.check(c)) {
        map.insert(g);
    }
    Ok(plan_from(map, s, goal))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrmEnd {
    Goal,
    /// No roadmap path makes progress toward the waypoint.
    Disconnected,
    NoFeasibleSamples,
    /// An executed configuration hit the true terrain.
    ExecutionCollision,
    BudgetExhausted,
}

impl PrmEnd {
    pub fn name(self) -> &'static str {
        match self {
            PrmEnd::Goal => "goal",
            PrmEnd::Disconnected => "disconnected",
            PrmEnd::NoFeasibleSamples => "no_feasible_samples",
            PrmEnd::ExecutionCollision => "execution_collision",
            PrmEnd::BudgetExhausted => "budget_exhausted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrmOutcome {
    pub end: PrmEnd,
    pub records: Vec<TrajectoryRecord>,
    /// Wall-clock seconds per planning call.
    pub plan_times: Vec<f64>,
    pub windows: usize,
}

impl PrmOutcome {
    pub fn success(&self) -> bool {
        self.end == PrmEnd::Goal
    }
}

/// Kinematic follower: walks a configuration sequence through its
/// interpolants at bounded speed, checking the true terrain as it goes.
pub struct Executor<'a> {
    pub terrain: &'a Terrain,
    pub system: &'a SystemParams,
    pub cfg: &'a PrmConfig,
    pub time: f64,
    pub current: SystemConfiguration,
    pub records: Vec<TrajectoryRecord>,
}

impl<'a> Executor<'a> {
    pub fn new(terrain: &'a Terrain, system: &'a SystemParams, cfg: &'a PrmConfig, start: SystemConfiguration) -> Self {
        let mut e = Self {
            terrain,
            system,
            cfg,
            time: 0.0,
            current: start,
            records: Vec::new(),
        };
        e.record(start, start, 0.0);
        e
    }

    fn record(&mut self, prev: SystemConfiguration, c: SystemConfiguration, dt: f64) {
        let l = self.system.bar_length;
        let (pa, ca) = (prev.agent_poses(l), c.agent_poses(l));
        let vel = |a: &Pose2, b: &Pose2| {
            if dt > 0.0 {
                Twist {
                    linear: (b.position - a.position) / dt,
                    angular: angle_diff(b.yaw, a.yaw) / dt,
                }
            } else {
                Twist::default()
            }
        };
        self.records.push(TrajectoryRecord {
            step: self.records.len(),
            time: self.time,
            agent1: FrameSample {
                pose: ca[0],
                velocity: vel(&pa[0], &ca[0]),
            },
            agent2: FrameSample {
                pose: ca[1],
                velocity: vel(&pa[1], &ca[1]),
            },
            object: FrameSample {
                pose: c.pose,
                velocity: vel(&prev.pose, &c.pose),
            },
            action: [0.0; 6],
            reward: RewardBreakdown::default(),
            penetrations: [0.0; 3],
        });
    }

    /// Moves to `next` through its interpolants. `Err(())` on collision.
    pub fn step_to(&mut self, next: &SystemConfiguration) -> std::result::Result<(), ()> {
        let mut seq = interpolants(&self.current, next, self.cfg.n_interp);
        seq.push(*next);
        for c in seq {
            let prev = self.current;
            let dt = (prev.max_displacement(&c, self.system.bar_length) / self.cfg.max_speed)
                .max(prev.max_rotation(&c) / self.cfg.max_yaw_rate);
            self.time += dt;
            self.current = c;
            self.record(prev, c, dt);
            if !feasible(&c, self.terrain, self.time, self.system) {
                return Err(());
            }
        }
        Ok(())
    }
}

fn timed<T>(times: &mut Vec<f64>, f: impl FnOnce() -> T) -> T {
    let t0 = Instant::now();
    let out = f();
    times.push(t0.elapsed().as_secs_f64());
    out
}

/// Runs the planner through every waypoint in order.
pub fn run_prm(
    terrain: &Terrain,
    start: &SystemConfiguration,
    waypoints: &[Vec2],
    cfg: &PrmConfig,
    system: &SystemParams,
    reach_radius: f64,
    seed: u64,
) -> Result<PrmOutcome> {
    cfg.validate()?;
    match cfg.mode {
        PrmMode::Full => run_full(terrain, start, waypoints, cfg, system, reach_radius, seed),
        PrmMode::Local => run_local(terrain, start, waypoints, cfg, system, reach_radius, seed),
    }
}

fn finish(end: PrmEnd, exec: Executor<'_>, plan_times: Vec<f64>, windows: usize) -> Result<PrmOutcome> {
    Ok(PrmOutcome {
        end,
        records: exec.records,
        plan_times,
        windows,
    })
}

fn run_full(
    terrain: &Terrain,
    start: &SystemConfiguration,
    waypoints: &[Vec2],
    cfg: &PrmConfig,
    system: &SystemParams,
    reach_radius: f64,
    seed: u64,
) -> Result<PrmOutcome> {
    let mut times = Vec::new();
    let mut exec = Executor::new(terrain, system, cfg, *start);
    let region = Region::Rect {
        min: terrain.bounds_min,
        max: terrain.bounds_max,
    };
    let feas = Feasibility::new(region.visible_obstacles(terrain, 0.0), system, 0.0);
    let legs = timed(&mut times, || -> Result<Option<Vec<LegPlan>>> {
        let mut map = match build_roadmap(region, feas, cfg, seed) {
            Ok(m) => m,
            Err(Error::Planning(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let mut legs = Vec::new();
        let mut from = *start;
        for &wp in waypoints {
            let leg = plan(&from, wp, &mut map)?;
            if leg.goal_distance >= reach_radius {
                legs.push(leg);
                return Ok(Some(legs));
            }
            from = *leg.configs.last().expect("non-empty plan");
            legs.push(leg);
        }
        Ok(Some(legs))
    })?;
    let Some(legs) = legs else {
        return finish(PrmEnd::NoFeasibleSamples, exec, times, 1);
    };
    let complete = legs.len() == waypoints.len() && legs.iter().all(|l| l.goal_distance < reach_radius);
    for leg in &legs {
        for c in leg.configs.iter().skip(1) {
            if exec.step_to(c).is_err() {
                return finish(PrmEnd::ExecutionCollision, exec, times, 1);
            }
        }
    }
    let end = if complete { PrmEnd::Goal } else { PrmEnd::Disconnected };
    finish(end, exec, times, 1)
}

fn run_local(
    terrain: &Terrain,
    start: &SystemConfiguration,
    waypoints: &[Vec2],
    cfg: &PrmConfig,
    system: &SystemParams,
    reach_radius: f64,
    seed: u64,
) -> Result<PrmOutcome> {
    let mut times = Vec::new();
    let mut exec = Executor::new(terrain, system, cfg, *start);
    let mut next = 0;
    let half = Vec2::new(cfg.window[0] / 2.0, cfg.window[1] / 2.0);
    let advance = |next: &mut usize, p: Vec2| {
        while *next < waypoints.len() && waypoints[*next].distance(p) < reach_radius {
            *next += 1;
        }
    };
    advance(&mut next, start.pose.position);
    for window in 0..cfg.replan_budget {
        if next >= waypoints.len() {
            return finish(PrmEnd::Goal, exec, times, window);
        }
        let wp = waypoints[next];
        let here = exec.current;
        let region = Region::Window {
            frame: here.pose,
            half_extents: half,
        };
        let mut feas = Feasibility::new(region.visible_obstacles(terrain, exec.time), system, exec.time);
        feas.known_region = Some(region);
        let window_seed = seed.wrapping_add((window as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let leg = timed(&mut times, || -> Result<Option<LegPlan>> {
            let mut map = match build_roadmap(region, feas, cfg, window_seed) {
                Ok(m) => m,
                Err(Error::Planning(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            if !map.feasibility.check(&here) {
                return Ok(None);
            }
            let s = map.insert(here);
            if region.contains(wp) {
                if let Some(g) = goal_candidates(&here, wp).into_iter().find(|c| map.feasibility.check(c)) {
                    map.insert(g);
                }
            }
            Ok(Some(plan_from(&map, s, wp)))
        })?;
        let Some(leg) = leg else {
            return finish(PrmEnd::NoFeasibleSamples, exec, times, window + 1);
        };
        if leg.goal_distance >= here.pose.position.distance(wp) - 1e-3 {
            return finish(PrmEnd::Disconnected, exec, times, window + 1);
        }
        for c in leg.configs.iter().skip(1) {
            if exec.step_to(c).is_err() {
                return finish(PrmEnd::ExecutionCollision, exec, times, window + 1);
            }
            let before = next;
            advance(&mut next, c.pose.position);
            if next != before {
                break;
            }
        }
    }
    let end = if next >= waypoints.len() { PrmEnd::Goal } else { PrmEnd::BudgetExhausted };
    let windows = cfg.replan_budget;
    finish(end, exec, times, windows)
}
