//! Simulated elevation mapping: per-agent sensing with occlusion, max-filter
//! hole filling, fusion into the object-frame policy grid, and noise
//! augmentation.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{frame_to_world, world_to_frame, BoxObstacle, Pose2, Vec2};
use crate::terrain::Terrain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerceptionConfig {
    /// Side of the square per-agent map.
    pub sense_extent: f64,
    pub sense_resolution: f64,
    pub sensor_height: f64,
    pub occlusion: bool,
    /// Policy map extent along the object x-axis (H) and y-axis (W).
    pub map_height: f64,
    pub map_width: f64,
    pub map_resolution: f64,
    pub noise_std: f64,
    pub artifact_prob: f64,
    pub artifact_height: f64,
    /// Apply [`augment`] to the fused map during rollouts.
    pub augment: bool,
    /// Report heights relative to the ground under the object instead of absolute.
    pub relative_heights: bool,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            sense_extent: 8.0,
            sense_resolution: 0.04,
            sensor_height: 0.5,
            occlusion: true,
            map_height: 4.0,
            map_width: 6.0,
            map_resolution: 0.3,
            noise_std: 0.02,
            artifact_prob: 0.01,
            artifact_height: 0.4,
            augment: false,
            relative_heights: false,
        }
    }
}

impl PerceptionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sense_extent > 0.0 && self.sense_resolution > 0.0 && self.map_resolution > 0.0) {
            return Err(Error::Config("map extents and resolutions must be positive".into()));
        }
        if !(self.map_height >= self.map_resolution && self.map_width >= self.map_resolution) {
            return Err(Error::Config("policy map must hold at least one cell".into()));
        }
        if !(self.noise_std >= 0.0 && (0.0..=1.0).contains(&self.artifact_prob)) {
            return Err(Error::Config("noise_std must be >= 0 and artifact_prob in [0, 1]".into()));
        }
        Ok(())
    }

    /// Policy grid `(rows, cols)`: rows along the object x-axis.
    pub fn policy_dims(&self) -> (usize, usize) {
        (
            (self.map_height / self.map_resolution).round() as usize,
            (self.map_width / self.map_resolution).round() as usize,
        )
    }

    pub fn sense_dims(&self) -> usize {
        (self.sense_extent / self.sense_resolution).round() as usize
    }
}

/// Grid of heights centered on and oriented with `frame`. Row index grows
/// along the frame x-axis, column index along its y-axis.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightMap {
    pub frame: Pose2,
    pub rows: usize,
    pub cols: usize,
    pub resolution: f64,
    pub cells: Vec<f64>,
    pub valid: Vec<bool>,
}

impl HeightMap {
    /// All-valid flat map.
    pub fn new(frame: Pose2, rows: usize, cols: usize, resolution: f64) -> Self {
        Self {
            frame,
            rows,
            cols,
            resolution,
            cells: vec![0.0; rows * cols],
            valid: vec![true; rows * cols],
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.cells[self.index(r, c)]
    }

    pub fn is_valid(&self, r: usize, c: usize) -> bool {
        self.valid[self.index(r, c)]
    }

    pub fn n_invalid(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    pub fn cell_center_local(&self, r: usize, c: usize) -> Vec2 {
        Vec2::new(
            (r as f64 - (self.rows as f64 - 1.0) / 2.0) * self.resolution,
            (c as f64 - (self.cols as f64 - 1.0) / 2.0) * self.resolution,
        )
    }

    pub fn cell_center_world(&self, r: usize, c: usize) -> Vec2 {
        frame_to_world(self.cell_center_local(r, c), &self.frame)
    }

    /// Cell containing a frame-local point, if inside the grid.
    pub fn locate_local(&self, p: Vec2) -> Option<(usize, usize)> {
        let r = (p.x / self.resolution + self.rows as f64 / 2.0).floor();
        let c = (p.y / self.resolution + self.cols as f64 / 2.0).floor();
        if r >= 0.0 && c >= 0.0 && (r as usize) < self.rows && (c as usize) < self.cols {
            Some((r as usize, c as usize))
        } else {
            None
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "carrybar-heightmap 1");
        let _ = writeln!(s, "frame {} {} {}", self.frame.position.x, self.frame.position.y, self.frame.yaw);
        let _ = writeln!(s, "size {} {} {}", self.rows, self.cols, self.resolution);
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|c| {
                    if self.is_valid(r, c) {
                        format!("{}", self.get(r, c))
                    } else {
                        "nan".to_string()
                    }
                })
                .collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Parse(format!("height map: {m}"));
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("carrybar-heightmap 1") {
            return Err(bad("missing header"));
        }
        let nums = |line: Option<&str>, key: &str| -> Result<Vec<f64>> {
            let line = line.ok_or_else(|| bad("truncated header"))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(&format!("expected {key}")));
            }
            it.map(|t| t.parse::<f64>().map_err(|_| bad("bad number"))).collect()
        };
        let f = nums(lines.next(), "frame")?;
        let z = nums(lines.next(), "size")?;
        if f.len() != 3 || z.len() != 3 {
            return Err(bad("malformed header"));
        }
        let (rows, cols) = (z[0] as usize, z[1] as usize);
        let mut m = HeightMap::new(Pose2::new(Vec2::new(f[0], f[1]), f[2]), rows, cols, z[2]);
        for r in 0..rows {
            let line = lines.next().ok_or_else(|| bad("missing rows"))?;
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != cols {
                return Err(Error::Dimension {
                    expected: cols,
                    actual: vals.len(),
                });
            }
            for (c, v) in vals.into_iter().enumerate() {
                let i = m.index(r, c);
                if v == "nan" {
                    m.valid[i] = false;
                } else {
                    m.cells[i] = v.parse().map_err(|_| bad("bad height"))?;
                }
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Open parameter interval of the segment `a + s·d` strictly inside `[lo, hi]`.
fn slab_interval(a: Vec2, d: Vec2, lo: Vec2, hi: Vec2) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for (o, dir, l, h) in [(a.x, d.x, lo.x, hi.x), (a.y, d.y, lo.y, hi.y)] {
        if dir == 0.0 {
            if o <= l || o >= h {
                return None;
            }
        } else {
            let (u, v) = ((l - o) / dir, (h - o) / dir);
            t0 = t0.max(u.min(v));
            t1 = t1.min(u.max(v));
        }
    }
    (t0 < t1).then_some((t0, t1))
}

/// True when the sight line from the sensor to the top of the cell centered
/// at `q` passes through a taller obstacle before reaching the cell.
fn occluded(sensor: Vec2, sensor_h: f64, q: Vec2, q_h: f64, half_cell: f64, boxes: &[(Vec2, Vec2, f64)]) -> bool {
    let d = q - sensor;
    let cell = Vec2::new(half_cell, half_cell);
    let enter = match slab_interval(sensor, d, q - cell, q + cell) {
        Some((s0, _)) => s0.max(0.0),
        None => return false,
    };
    for &(lo, hi, h) in boxes {
        if let Some((s0, s1)) = slab_interval(sensor, d, lo, hi) {
            let (a, b) = (s0.max(0.0), s1.min(enter));
            if b - a > 1e-9 {
                let z = |s: f64| sensor_h + s * (q_h - sensor_h);
                if z(a).min(z(b)) < h {
                    return true;
                }
            }
        }
    }
    false
}

/// Height map of the terrain around an agent at time `t`, world-aligned.
/// Cells off the terrain and cells hidden behind obstacles are invalid.
pub fn sense(terrain: &Terrain, agent_pose: &Pose2, t: f64, cfg: &PerceptionConfig) -> HeightMap {
    let n = cfg.sense_dims();
    let res = cfg.sense_resolution;
    let mut m = HeightMap::new(Pose2::new(agent_pose.position, 0.0), n, n, res);
    let reach = cfg.sense_extent * std::f64::consts::FRAC_1_SQRT_2 + res;
    let sensor = agent_pose.position;
    let boxes: Vec<(Vec2, Vec2, f64)> = terrain
        .obstacles()
        .filter(|b| crate::geometry::point_box_distance(sensor, b, t) < reach)
        .map(|b: &BoxObstacle| {
            let (lo, hi) = b.bounds_at(t);
            (lo, hi, b.height)
        })
        .collect();
    let first = m.cell_center_world(0, 0);
    for r in 0..n {
        let x = first.x + r as f64 * res;
        for c in 0..n {
            let q = Vec2::new(x, first.y + c as f64 * res);
            let i = r * n + c;
            if !terrain.in_bounds(q) {
                m.valid[i] = false;
                continue;
            }
            let h = boxes
                .iter()
                .filter(|(lo, hi, _)| q.x >= lo.x && q.x <= hi.x && q.y >= lo.y && q.y <= hi.y)
                .map(|b| b.2)
                .fold(0.0, f64::max);
            m.cells[i] = h;
            if cfg.occlusion && !boxes.is_empty() && occluded(sensor, cfg.sensor_height, q, h, res / 2.0, &boxes) {
                m.valid[i] = false;
                m.cells[i] = 0.0;
            }
        }
    }
    m
}

/// Fills invalid cells wave by wave with the maximum of their valid
/// 8-neighbors until nothing changes.
pub fn max_filter(m: &HeightMap) -> HeightMap {
    let mut out = m.clone();
    let (rows, cols) = (m.rows, m.cols);
    let mut nbr = [0usize; 8];
    let neighbors = |i: usize, buf: &mut [usize; 8]| -> usize {
        let (r, c) = (i / cols, i % cols);
        let mut k = 0;
        for rr in r.saturating_sub(1)..=(r + 1).min(rows - 1) {
            for cc in c.saturating_sub(1)..=(c + 1).min(cols - 1) {
                if (rr, cc) != (r, c) {
                    buf[k] = rr * cols + cc;
                    k += 1;
                }
            }
        }
        k
    };
    let mut candidates = Vec::new();
    for i in 0..out.len() {
        if !out.valid[i] {
            let k = neighbors(i, &mut nbr);
            if nbr[..k].iter().any(|&j| out.valid[j]) {
                candidates.push(i);
            }
        }
    }
    let mut queued = vec![false; out.len()];
    let mut filled: Vec<(usize, f64)> = Vec::new();
    while !candidates.is_empty() {
        filled.clear();
        for &i in &candidates {
            let k = neighbors(i, &mut nbr);
            let h = nbr[..k]
                .iter()
                .filter(|&&j| out.valid[j])
                .map(|&j| out.cells[j])
                .fold(f64::NEG_INFINITY, f64::max);
            filled.push((i, h));
        }
        for &(i, h) in &filled {
            out.cells[i] = h;
            out.valid[i] = true;
        }
        candidates.clear();
        for &(i, _) in &filled {
            let k = neighbors(i, &mut nbr);
            for &j in &nbr[..k] {
                if !out.valid[j] && !queued[j] {
                    queued[j] = true;
                    candidates.push(j);
                }
            }
        }
        for &j in &candidates {
            queued[j] = false;
        }
    }
    out
}

/// Resamples both maps into a grid aligned with `object_frame`; each output
/// cell holds the maximum of the valid source cells whose centers fall in
/// it. Cells seen by neither map are 0 and invalid.
pub fn fuse(m1: &HeightMap, m2: &HeightMap, object_frame: &Pose2, rows: usize, cols: usize, resolution: f64) -> HeightMap {
    let mut out = HeightMap::new(*object_frame, rows, cols, resolution);
    let mut best = vec![f64::NEG_INFINITY; rows * cols];
    let (half_r, half_c) = (rows as f64 / 2.0, cols as f64 / 2.0);
    for m in [m1, m2] {
        // Source-local to output-grid coordinates (in cells) is affine.
        let origin = world_to_frame(m.cell_center_world(0, 0), object_frame);
        let rel = m.frame.yaw - object_frame.yaw;
        let step_r = Vec2::new(1.0, 0.0).rotated(rel) * m.resolution;
        let step_c = Vec2::new(0.0, 1.0).rotated(rel) * m.resolution;
        for r in 0..m.rows {
            let row0 = origin + step_r * r as f64;
            for c in 0..m.cols {
                let i = r * m.cols + c;
                if !m.valid[i] {
                    continue;
                }
                let p = row0 + step_c * c as f64;
                let gr = (p.x / resolution + half_r).floor();
                let gc = (p.y / resolution + half_c).floor();
                if gr >= 0.0 && gc >= 0.0 && gr < rows as f64 && gc < cols as f64 {
                    let k = gr as usize * cols + gc as usize;
                    best[k] = best[k].max(m.cells[i]);
                }
            }
        }
    }
    for (k, b) in best.into_iter().enumerate() {
        if b.is_finite() {
            out.cells[k] = b;
        } else {
            out.cells[k] = 0.0;
            out.valid[k] = false;
        }
    }
    out
}

/// Gaussian height noise plus sporadic raised cells mimicking the carried
/// bar appearing in the camera view.
pub fn augment(m: &HeightMap, cfg: &PerceptionConfig, seed: u64) -> HeightMap {
    let mut out = m.clone();
    if cfg.noise_std == 0.0 && cfg.artifact_prob == 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.noise_std).ok();
    for h in &mut out.cells {
        if let Some(n) = &noise {
            *h += n.sample(&mut rng);
        }
        if cfg.artifact_prob > 0.0 && rng.gen_bool(cfg.artifact_prob) {
            *h = h.max(cfg.artifact_height);
        }
    }
    out
}

/// Sense with both agents, fill holes and fuse into the policy grid.
pub fn policy_map(
    terrain: &Terrain,
    agents: [&Pose2; 2],
    object_frame: &Pose2,
    t: f64,
    cfg: &PerceptionConfig,
) -> HeightMap {
    let m1 = max_filter(&sense(terrain, agents[0], t, cfg));
    let m2 = max_filter(&sense(terrain, agents[1], t, cfg));
    let (rows, cols) = cfg.policy_dims();
    fuse(&m1, &m2, object_frame, rows, cols, cfg.map_resolution)
}
