//! Planar primitives, frames and signed-distance / collision queries.
//!
//! Everything here is a pure function of its inputs. Obstacles are
//! axis-aligned boxes that may translate at constant velocity; their pose is
//! evaluated lazily at the query time `t`.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// Planar vector in meters (or meters/second when used as a velocity).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    /// Counter-clockwise perpendicular `(-y, x)`.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    /// Unit vector, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > f64::EPSILON).then(|| self / n)
    }

    /// Counter-clockwise rotation by `theta` radians.
    #[inline]
    pub fn rotated(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    #[inline]
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    #[inline]
    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn abs(self) -> Vec2 {
        Vec2::new(self.x.abs(), self.y.abs())
    }

    #[inline]
    pub fn max(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x.max(o.x), self.y.max(o.y))
    }

    #[inline]
    pub fn lerp(self, o: Vec2, s: f64) -> Vec2 {
        self + (o - self) * s
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    #[inline]
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Signed shortest-arc difference `to - from`, in `(-π, π]`.
pub fn angle_diff(to: f64, from: f64) -> f64 {
    wrap_angle(to - from)
}

/// SE(2) pose: position plus heading.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub position: Vec2,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(position: Vec2, yaw: f64) -> Self {
        Self {
            position,
            yaw: wrap_angle(yaw),
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    /// Unit x-axis of the frame in world coordinates.
    pub fn x_axis(&self) -> Vec2 {
        Vec2::from_angle(self.yaw)
    }

    /// Unit y-axis of the frame in world coordinates.
    pub fn y_axis(&self) -> Vec2 {
        Vec2::from_angle(self.yaw).perp()
    }
}

/// Expresses a world point in `frame` coordinates.
pub fn world_to_frame(p_world: Vec2, frame: &Pose2) -> Vec2 {
    (p_world - frame.position).rotated(-frame.yaw)
}

/// Inverse of [`world_to_frame`].
pub fn frame_to_world(p_frame: Vec2, frame: &Pose2) -> Vec2 {
    p_frame.rotated(frame.yaw) + frame.position
}

/// Axis-aligned box obstacle, optionally translating at constant velocity.
///
/// When `motion_duration` is set the box stops after that many seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxObstacle {
    pub center: Vec2,
    pub half_extents: Vec2,
    pub height: f64,
    #[serde(default)]
    pub velocity: Vec2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion_duration: Option<f64>,
}

impl BoxObstacle {
    pub fn fixed(center: Vec2, half_extents: Vec2, height: f64) -> Self {
        Self {
            center,
            half_extents,
            height,
            velocity: Vec2::ZERO,
            motion_duration: None,
        }
    }

    pub fn is_static(&self) -> bool {
        self.velocity == Vec2::ZERO
    }

    pub fn is_valid(&self) -> bool {
        self.center.is_finite()
            && self.half_extents.x > 0.0
            && self.half_extents.y > 0.0
            && self.height > 0.0
            && self.velocity.is_finite()
    }

    /// Box center at time `t`.
    pub fn center_at(&self, t: f64) -> Vec2 {
        if self.is_static() {
            return self.center;
        }
        let elapsed = match self.motion_duration {
            Some(d) => t.clamp(0.0, d),
            None => t,
        };
        self.center + self.velocity * elapsed
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_extents.x * self.half_extents.y
    }

    /// `(min, max)` corners at time `t`.
    pub fn bounds_at(&self, t: f64) -> (Vec2, Vec2) {
        let c = self.center_at(t);
        (c - self.half_extents, c + self.half_extents)
    }

    pub fn corners_at(&self, t: f64) -> [Vec2; 4] {
        let (lo, hi) = self.bounds_at(t);
        [
            lo,
            Vec2::new(hi.x, lo.y),
            hi,
            Vec2::new(lo.x, hi.y),
        ]
    }

    /// True when the interiors of the two boxes overlap at time `t`.
    pub fn overlaps(&self, other: &BoxObstacle, t: f64) -> bool {
        let d = (self.center_at(t) - other.center_at(t)).abs();
        let h = self.half_extents + other.half_extents;
        d.x < h.x && d.y < h.y
    }
}

/// Rectangular agent collision body, centered on the agent base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub half_length: f64,
    pub half_width: f64,
}

impl Default for Footprint {
    fn default() -> Self {
        Self {
            half_length: 0.40,
            half_width: 0.25,
        }
    }
}

impl Footprint {
    pub fn corners(&self, pose: &Pose2) -> [Vec2; 4] {
        let (l, w) = (self.half_length, self.half_width);
        [
            Vec2::new(l, w),
            Vec2::new(-l, w),
            Vec2::new(-l, -w),
            Vec2::new(l, -w),
        ]
        .map(|c| frame_to_world(c, pose))
    }
}

#[inline]
fn box_sdf(p: Vec2, center: Vec2, half: Vec2) -> f64 {
    let q = (p - center).abs() - half;
    let outside = q.max(Vec2::ZERO).norm();
    let inside = q.x.max(q.y).min(0.0);
    outside + inside
}

/// Signed distance from `p` to the box boundary at time `t`: positive
/// outside, negative inside (penetration depth), zero on the boundary.
pub fn point_box_distance(p: Vec2, b: &BoxObstacle, t: f64) -> f64 {
    box_sdf(p, b.center_at(t), b.half_extents)
}

/// Unsigned distance from `p` to the segment `ab`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return p.distance(a);
    }
    let s = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * s)
}

/// Minimum signed distance from segment `ab` to the box at time `t`;
/// negative iff the segment passes through the box interior.
pub fn segment_box_distance(a: Vec2, b: Vec2, bx: &BoxObstacle, t: f64) -> f64 {
    let c = bx.center_at(t);
    let h = bx.half_extents;
    let d0 = a - c;
    let dir = b - a;

    // Inside the box the SDF is max(|dx|-hx, |dy|-hy): piecewise linear and
    // convex along the segment, so its minimum sits at an endpoint or a kink.
    let mut candidates: Vec<f64> = Vec::with_capacity(10);
    candidates.push(0.0);
    candidates.push(1.0);
    if dir.x != 0.0 {
        candidates.push(-d0.x / dir.x);
    }
    if dir.y != 0.0 {
        candidates.push(-d0.y / dir.y);
    }
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            // sx*dx - hx = sy*dy - hy
            let denom = sx * dir.x - sy * dir.y;
            if denom != 0.0 {
                candidates.push((sy * d0.y - h.y - sx * d0.x + h.x) / denom);
            }
        }
    }
    let inner = candidates
        .into_iter()
        .filter(|s| (0.0..=1.0).contains(s))
        .map(|s| box_sdf(a + dir * s, c, h))
        .fold(f64::INFINITY, f64::min);
    if inner < 0.0 {
        return inner;
    }

    // Disjoint (or touching): distance between two convex sets is attained
    // at a segment endpoint or a box corner.
    let mut best = box_sdf(a, c, h).min(box_sdf(b, c, h));
    for corner in bx.corners_at(t) {
        best = best.min(point_segment_distance(corner, a, b));
    }
    best.max(0.0)
}

/// Separating-axis test between the rotated footprint at `pose` and the box.
/// Touching boundaries do not count as a collision.
pub fn oriented_footprint_collides(pose: &Pose2, fp: &Footprint, b: &BoxObstacle, t: f64) -> bool {
    footprint_penetration(pose, fp, b, t) > 0.0
}

/// Minimum overlap over the four separating axes (zero when separated).
/// Serves as the penetration depth of an agent body into a box.
pub fn footprint_penetration(pose: &Pose2, fp: &Footprint, b: &BoxObstacle, t: f64) -> f64 {
    let c = b.center_at(t);
    let h = b.half_extents;
    let ux = pose.x_axis();
    let uy = pose.y_axis();
    let d = pose.position - c;

    let mut depth = f64::INFINITY;
    // World axes (box faces).
    for (axis, box_r) in [(Vec2::new(1.0, 0.0), h.x), (Vec2::new(0.0, 1.0), h.y)] {
        let fp_r = fp.half_length * ux.dot(axis).abs() + fp.half_width * uy.dot(axis).abs();
        let overlap = box_r + fp_r - d.dot(axis).abs();
        if overlap <= 0.0 {
            return 0.0;
        }
        depth = depth.min(overlap);
    }
    // Footprint axes.
    for (axis, fp_r) in [(ux, fp.half_length), (uy, fp.half_width)] {
        let box_r = h.x * axis.x.abs() + h.y * axis.y.abs();
        let overlap = box_r + fp_r - d.dot(axis).abs();
        if overlap <= 0.0 {
            return 0.0;
        }
        depth = depth.min(overlap);
    }
    depth
}
