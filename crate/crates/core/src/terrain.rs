//! Curriculum terrain generation and the fixed evaluation scenarios.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_box_distance, BoxObstacle, Pose2, Vec2};

/// Rejection-sampling cap per obstacle.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerrainConfig {
    /// Number of curriculum levels.
    pub n_levels: usize,
    /// Occupied-area fraction of the hardest level.
    pub d_max: f64,
    pub obstacle_height: f64,
    /// `[s_min, s_max]` range for box width and length.
    pub size_range: [f64; 2],
    /// Side of each square subterrain.
    pub subterrain_extent: f64,
    pub rng_seed: u64,
}

impl Default for TerrainConfig {
    fn default() -> Self {
        Self {
            n_levels: 50,
            d_max: 0.1,
            obstacle_height: 1.0,
            size_range: [1.0, 1.5],
            subterrain_extent: 12.0,
            rng_seed: 0,
        }
    }
}

impl TerrainConfig {
    pub fn validate(&self) -> Result<()> {
        let [s_min, s_max] = self.size_range;
        if self.n_levels == 0 {
            return Err(Error::Config("n_levels must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.d_max) {
            return Err(Error::Config(format!("d_max {} outside [0, 1]", self.d_max)));
        }
        if !(self.obstacle_height > 0.0) {
            return Err(Error::Config("obstacle_height must be positive".into()));
        }
        if !(s_min > 0.0 && s_min <= s_max) {
            return Err(Error::Config(format!("invalid size range [{s_min}, {s_max}]")));
        }
        if !(self.subterrain_extent > 0.0) {
            return Err(Error::Config("subterrain_extent must be positive".into()));
        }
        if s_max > self.subterrain_extent {
            return Err(Error::Config(format!(
                "obstacle size {s_max} m cannot fit in a {} m subterrain",
                self.subterrain_extent
            )));
        }
        Ok(())
    }

    /// Linear difficulty ramp from 0 at level 0 to `d_max` at the last level.
    pub fn difficulty(&self, level: usize) -> f64 {
        if self.n_levels <= 1 {
            return 0.0;
        }
        level as f64 / (self.n_levels - 1) as f64 * self.d_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subterrain {
    pub level: usize,
    pub min: Vec2,
    pub max: Vec2,
    pub difficulty: f64,
    pub obstacles: Vec<BoxObstacle>,
}

impl Subterrain {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }

    pub fn occupied_area(&self) -> f64 {
        self.obstacles.iter().map(BoxObstacle::area).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub bounds_min: Vec2,
    pub bounds_max: Vec2,
    pub subterrains: Vec<Subterrain>,
}

const TERRAIN_FORMAT: &str = "carrybar-terrain";
const TERRAIN_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TerrainFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    terrain: Terrain,
}

impl Terrain {
    /// A single obstacle-free subterrain covering `[min, max]`.
    pub fn empty(min: Vec2, max: Vec2) -> Self {
        Self::single(min, max, Vec::new())
    }

    pub fn single(min: Vec2, max: Vec2, obstacles: Vec<BoxObstacle>) -> Self {
        Self {
            bounds_min: min,
            bounds_max: max,
            subterrains: vec![Subterrain {
                level: 0,
                min,
                max,
                difficulty: 0.0,
                obstacles,
            }],
        }
    }

    pub fn in_bounds(&self, p: Vec2) -> bool {
        p.x >= self.bounds_min.x
            && p.x <= self.bounds_max.x
            && p.y >= self.bounds_min.y
            && p.y <= self.bounds_max.y
    }

    pub fn obstacles(&self) -> impl Iterator<Item = &BoxObstacle> + '_ {
        self.subterrains.iter().flat_map(|s| s.obstacles.iter())
    }

    pub fn n_obstacles(&self) -> usize {
        self.subterrains.iter().map(|s| s.obstacles.len()).sum()
    }

    pub fn subterrain_at(&self, p: Vec2) -> Option<&Subterrain> {
        self.subterrains.iter().find(|s| s.contains(p))
    }

    /// Distance from `p` to the nearest obstacle boundary at time `t`
    /// (negative inside an obstacle, `+inf` without obstacles).
    pub fn nearest_obstacle_distance(&self, p: Vec2, t: f64) -> f64 {
        self.obstacles()
            .map(|b| point_box_distance(p, b, t))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn occupancy(&self, p: Vec2, t: f64) -> Result<bool> {
        Ok(self.height_at(p, t)? > 0.0)
    }

    /// Ground-truth height: obstacle height on occupied points, 0 elsewhere.
    pub fn height_at(&self, p: Vec2, t: f64) -> Result<f64> {
        if !self.in_bounds(p) {
            return Err(Error::OutOfBounds(p));
        }
        Ok(self.height_unchecked(p, t))
    }

    /// [`Terrain::height_at`] without the bounds check; 0 off the map.
    pub fn height_unchecked(&self, p: Vec2, t: f64) -> f64 {
        self.obstacles()
            .filter(|b| point_box_distance(p, b, t) <= 0.0)
            .map(|b| b.height)
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = TerrainFile {
            format: TERRAIN_FORMAT.into(),
            version: TERRAIN_VERSION,
            terrain: self.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: TerrainFile = serde_json::from_str(s)?;
        if file.format != TERRAIN_FORMAT || file.version != TERRAIN_VERSION {
            return Err(Error::Parse(format!(
                "unsupported terrain file {} v{}",
                file.format, file.version
            )));
        }
        let t = file.terrain;
        for b in t.obstacles() {
            if !b.is_valid() {
                return Err(Error::Parse(format!("invalid obstacle {b:?}")));
            }
        }
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Generates the curriculum terrain: one square subterrain per level laid
/// out along +x, each filled with non-overlapping boxes until its occupied
/// fraction reaches the level difficulty.
pub fn generate(cfg: &TerrainConfig) -> Result<Terrain> {
    cfg.validate()?;
    let extent = cfg.subterrain_extent;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut subterrains = Vec::with_capacity(cfg.n_levels);
    for level in 0..cfg.n_levels {
        let min = Vec2::new(level as f64 * extent, 0.0);
        let max = min + Vec2::new(extent, extent);
        let difficulty = cfg.difficulty(level);
        let obstacles = fill_subterrain(cfg, level, min, max, difficulty, &mut rng)?;
        subterrains.push(Subterrain {
            level,
            min,
            max,
            difficulty,
            obstacles,
        });
    }
    Ok(Terrain {
        bounds_min: Vec2::ZERO,
        bounds_max: Vec2::new(cfg.n_levels as f64 * extent, extent),
        subterrains,
    })
}

/// Picks box dimensions. Sizes are uniform in `[s_min, s_max]` while the
/// remaining area is large; the last one or two boxes are sized so the total
/// lands on the target instead of overshooting by a whole box.
fn sample_dims(rng: &mut ChaCha8Rng, s_min: f64, s_max: f64, deficit: f64) -> Vec2 {
    let (a_min, a_max) = (s_min * s_min, s_max * s_max);
    let planned = if deficit >= a_max + a_min {
        None
    } else if deficit > a_max {
        Some(deficit / 2.0)
    } else {
        Some(deficit.max(a_min))
    };
    match planned {
        None => Vec2::new(rng.gen_range(s_min..=s_max), rng.gen_range(s_min..=s_max)),
        Some(area) => {
            let lo = s_min.max(area / s_max);
            let hi = s_max.min(area / s_min);
            let w = if lo < hi { rng.gen_range(lo..=hi) } else { lo.min(s_max) };
            let l = (area / w).clamp(s_min, s_max);
            if rng.gen_bool(0.5) {
                Vec2::new(w, l)
            } else {
                Vec2::new(l, w)
            }
        }
    }
}

fn fill_subterrain(
    cfg: &TerrainConfig,
    level: usize,
    min: Vec2,
    max: Vec2,
    difficulty: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<BoxObstacle>> {
    let [s_min, s_max] = cfg.size_range;
    let target = difficulty * (max.x - min.x) * (max.y - min.y);
    let mut obstacles: Vec<BoxObstacle> = Vec::new();
    let mut area = 0.0;
    while target - area > 1e-9 * target.max(1.0) {
        let deficit = target - area;
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let size = sample_dims(rng, s_min, s_max, deficit);
            let half = size / 2.0;
            let center = Vec2::new(
                rng.gen_range(min.x + half.x..=max.x - half.x),
                rng.gen_range(min.y + half.y..=max.y - half.y),
            );
            let candidate = BoxObstacle::fixed(center, half, cfg.obstacle_height);
            if obstacles.iter().all(|o| !o.overlaps(&candidate, 0.0)) {
                placed = Some(candidate);
                break;
            }
        }
        let b = placed.ok_or(Error::PlacementExhausted {
            level,
            attempts: MAX_PLACEMENT_ATTEMPTS,
        })?;
        area += b.area();
        obstacles.push(b);
    }
    Ok(obstacles)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Empty,
    Corridor,
    Boxes,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [ScenarioKind::Empty, ScenarioKind::Corridor, ScenarioKind::Boxes];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Empty => "empty",
            ScenarioKind::Corridor => "corridor",
            ScenarioKind::Boxes => "boxes",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "empty" => Ok(ScenarioKind::Empty),
            "corridor" => Ok(ScenarioKind::Corridor),
            "boxes" => Ok(ScenarioKind::Boxes),
            _ => Err(Error::UnknownScenario(s.into())),
        }
    }
}

/// A fixed evaluation setup: terrain, initial object pose and waypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub dynamic: bool,
    pub terrain: Terrain,
    pub start: Pose2,
    pub waypoints: Vec<Vec2>,
}

pub const SCENARIO_BOX_SIDE: f64 = 1.5;
pub const SCENARIO_BOX_HEIGHT: f64 = 1.0;
pub const SCENARIO_PAIR_X: f64 = 3.0;
pub const BOXES_GAP: f64 = 2.5;
pub const CORRIDOR_GAP: f64 = 2.0;
pub const THIRD_BOX_X: f64 = 5.5;
pub const SECOND_LEG: f64 = 5.5;
pub const CORRIDOR_GOAL_X: f64 = 7.0;
/// Dynamic third box sweeps y from -1.25 m to +1.25 m at this speed.
pub const DYNAMIC_BOX_SPEED: f64 = 0.1;
pub const DYNAMIC_BOX_SWEEP: f64 = 1.25;

fn scenario_bounds() -> (Vec2, Vec2) {
    (Vec2::new(-2.0, -4.0), Vec2::new(10.0, 6.0))
}

fn box_pair(gap: f64) -> [BoxObstacle; 2] {
    let half = Vec2::new(SCENARIO_BOX_SIDE / 2.0, SCENARIO_BOX_SIDE / 2.0);
    let offset = gap / 2.0 + SCENARIO_BOX_SIDE / 2.0;
    [-offset, offset].map(|y| BoxObstacle::fixed(Vec2::new(SCENARIO_PAIR_X, y), half, SCENARIO_BOX_HEIGHT))
}

fn third_box(dynamic: bool) -> BoxObstacle {
    let half = Vec2::new(SCENARIO_BOX_SIDE / 2.0, SCENARIO_BOX_SIDE / 2.0);
    if dynamic {
        BoxObstacle {
            center: Vec2::new(THIRD_BOX_X, -DYNAMIC_BOX_SWEEP),
            half_extents: half,
            height: SCENARIO_BOX_HEIGHT,
            velocity: Vec2::new(0.0, DYNAMIC_BOX_SPEED),
            motion_duration: Some(2.0 * DYNAMIC_BOX_SWEEP / DYNAMIC_BOX_SPEED),
        }
    } else {
        BoxObstacle::fixed(Vec2::new(THIRD_BOX_X, 0.0), half, SCENARIO_BOX_HEIGHT)
    }
}

/// Builds one of the three benchmark scenarios. The object starts at the
/// origin facing +x. `dynamic` adds the moving third box (for `boxes` it
/// replaces the static one).
pub fn scenario(kind: ScenarioKind, dynamic: bool) -> Scenario {
    let (lo, hi) = scenario_bounds();
    let wp1 = Vec2::new(SCENARIO_PAIR_X, 0.0);
    let wp2 = wp1 + Vec2::from_angle(std::f64::consts::FRAC_PI_4) * SECOND_LEG;
    let (mut obstacles, waypoints) = match kind {
        ScenarioKind::Empty => (Vec::new(), vec![wp1, wp2]),
        ScenarioKind::Boxes => {
            let mut obs = box_pair(BOXES_GAP).to_vec();
            if !dynamic {
                obs.push(third_box(false));
            }
            (obs, vec![wp1, wp2])
        }
        ScenarioKind::Corridor => (
            box_pair(CORRIDOR_GAP).to_vec(),
            vec![Vec2::new(CORRIDOR_GOAL_X, 0.0)],
        ),
    };
    if dynamic {
        obstacles.push(third_box(true));
    }
    Scenario {
        kind,
        dynamic,
        terrain: Terrain::single(lo, hi, obstacles),
        start: Pose2::identity(),
        waypoints,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_cfg(seed: u64) -> TerrainConfig {
        TerrainConfig {
            n_levels: 12,
            rng_seed: seed,
            ..TerrainConfig::default()
        }
    }

    #[test]
    fn level_zero_is_empty_and_last_level_hits_dmax() {
        let cfg = TerrainConfig::default();
        let t = generate(&cfg).unwrap();
        assert_eq!(t.subterrains.len(), 50);
        assert!(t.subterrains[0].obstacles.is_empty());
        assert_eq!(t.subterrains[0].difficulty, 0.0);
        assert_abs_diff_eq!(t.subterrains[49].difficulty, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn obstacles_inside_subterrain_and_disjoint() {
        let t = generate(&small_cfg(3)).unwrap();
        for s in &t.subterrains {
            for (i, b) in s.obstacles.iter().enumerate() {
                let (lo, hi) = b.bounds_at(0.0);
                assert!(s.contains(lo) && s.contains(hi));
                let [s_min, s_max] = TerrainConfig::default().size_range;
                for side in [2.0 * b.half_extents.x, 2.0 * b.half_extents.y] {
                    assert!(side >= s_min - 1e-12 && side <= s_max + 1e-12);
                }
                for o in &s.obstacles[i + 1..] {
                    assert!(!b.overlaps(o, 0.0));
                }
            }
            if s.difficulty > 0.0 {
                assert!(s.occupied_area() >= s.difficulty * s.area() * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn difficulty_is_monotone() {
        let t = generate(&small_cfg(1)).unwrap();
        for w in t.subterrains.windows(2) {
            assert!(w[1].difficulty >= w[0].difficulty);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&small_cfg(42)).unwrap().to_json().unwrap();
        let b = generate(&small_cfg(42)).unwrap().to_json().unwrap();
        let c = generate(&small_cfg(43)).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn json_round_trip() {
        let mut t = generate(&small_cfg(7)).unwrap();
        t.subterrains[3].obstacles[0].velocity = Vec2::new(0.1, -0.2);
        t.subterrains[3].obstacles[0].motion_duration = Some(4.0);
        let back = Terrain::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
        assert!(Terrain::from_json("{\"format\":\"x\"}").is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = TerrainConfig::default();
        cfg.size_range = [1.0, 13.0];
        assert!(matches!(generate(&cfg), Err(Error::Config(_))));
        cfg.size_range = [1.5, 1.0];
        assert!(generate(&cfg).is_err());
        let cfg = TerrainConfig { n_levels: 0, ..Default::default() };
        assert!(generate(&cfg).is_err());
        let cfg = TerrainConfig { d_max: 1.5, ..Default::default() };
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn height_queries() {
        let t = generate(&small_cfg(5)).unwrap();
        let s0 = &t.subterrains[0];
        assert_eq!(t.height_at(s0.min + Vec2::new(6.0, 6.0), 0.0).unwrap(), 0.0);
        let b = t.subterrains[11].obstacles[0];
        assert_eq!(t.height_at(b.center, 0.0).unwrap(), 1.0);
        assert!(t.occupancy(b.center, 0.0).unwrap());
        assert!(matches!(t.height_at(Vec2::new(-1.0, 0.0), 0.0), Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn moving_obstacle_shifts_occupancy() {
        let mut b = BoxObstacle::fixed(Vec2::new(5.0, 5.0), Vec2::new(0.5, 0.5), 1.0);
        b.velocity = Vec2::new(0.2, 0.0);
        let t = Terrain::single(Vec2::ZERO, Vec2::new(10.0, 10.0), vec![b]);
        // 0.2 m/s for 5 s: the box spans x in [5.5, 6.5] at t = 5.
        let p = Vec2::new(4.75, 5.0);
        assert!(t.occupancy(p, 0.0).unwrap());
        assert!(!t.occupancy(p, 5.0).unwrap());
        assert!(t.occupancy(p + Vec2::new(1.0, 0.0), 5.0).unwrap());
        assert!(!t.occupancy(Vec2::new(6.25, 5.0), 0.0).unwrap());
        assert!(t.occupancy(Vec2::new(6.25, 5.0), 5.0).unwrap());
    }

    #[test]
    fn scenario_geometry() {
        let e = scenario(ScenarioKind::Empty, false);
        assert_eq!(e.terrain.n_obstacles(), 0);
        assert_eq!(e.waypoints.len(), 2);
        assert_abs_diff_eq!(e.waypoints[1].distance(e.waypoints[0]), 5.5, epsilon = 1e-12);
        assert_abs_diff_eq!((e.waypoints[1] - e.waypoints[0]).angle(), std::f64::consts::FRAC_PI_4, epsilon = 1e-12);

        let c = scenario(ScenarioKind::Corridor, false);
        let obs: Vec<_> = c.terrain.obstacles().copied().collect();
        assert_eq!(obs.len(), 2);
        let gap = (obs[1].center.y - obs[1].half_extents.y) - (obs[0].center.y + obs[0].half_extents.y);
        assert_abs_diff_eq!(gap, 2.0, epsilon = 1e-12);
        assert_eq!(c.waypoints, vec![Vec2::new(7.0, 0.0)]);

        let b = scenario(ScenarioKind::Boxes, false);
        let obs: Vec<_> = b.terrain.obstacles().copied().collect();
        assert_eq!(obs.len(), 3);
        let gap = (obs[1].center.y - obs[1].half_extents.y) - (obs[0].center.y + obs[0].half_extents.y);
        assert_abs_diff_eq!(gap, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(obs[2].center.x - obs[0].center.x, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(obs[0].center.x, 3.0);

        let d = scenario(ScenarioKind::Boxes, true);
        let mover = d.terrain.obstacles().find(|o| !o.is_static()).unwrap();
        assert_abs_diff_eq!(mover.center_at(0.0).y, -1.25);
        assert_abs_diff_eq!(mover.center_at(1000.0).y, 1.25, epsilon = 1e-12);
        assert_eq!(d.terrain.n_obstacles(), 3);
    }
}
