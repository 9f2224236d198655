//! Reward and penalty terms.
//!
//! Weights are applied exactly as configured. Note that the default `w1` and
//! `w2` are negative, so the shipped tracking term penalizes motion along the
//! command; flip their signs in the config to turn them into rewards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_box_distance, Vec2};
use crate::sim::Action;
use crate::terrain::Terrain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub w5: f64,
    pub w6: f64,
    pub w7: f64,
    pub w8: f64,
    pub w9: f64,
    pub alpha: f64,
    pub beta: f64,
    pub d_s_base: f64,
    pub d_s_obj: f64,
    pub delta: f64,
    pub tau: f64,
    pub t_stand: usize,
    /// Force magnitude above which a contact is penalized.
    pub contact_threshold: f64,
    /// Force proxy per meter of penetration.
    pub contact_stiffness: f64,
    /// Object speed below which the tracking term is zero.
    pub rest_speed: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            w1: -0.5,
            w2: -0.5,
            w3: -7.5,
            w4: -0.2,
            w5: -2.5,
            w6: -0.1,
            w7: -0.001,
            w8: -0.0005,
            w9: -0.1,
            alpha: 10.0,
            beta: 15.0,
            d_s_base: 0.6,
            d_s_obj: 0.2,
            delta: 2.0,
            tau: 0.15,
            t_stand: 10,
            contact_threshold: 1.0,
            contact_stiffness: 1000.0,
            rest_speed: 1e-3,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.w1, self.w2, self.w3, self.w4, self.w5, self.w6, self.w7, self.w8, self.w9];
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("reward weights must be finite".into()));
        }
        if !(self.delta > self.d_s_base && self.delta > self.d_s_obj) {
            return Err(Error::Config("delta must exceed both safety distances".into()));
        }
        if self.t_stand < 1 {
            return Err(Error::Config("t_stand must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.contact_stiffness >= 0.0 && self.rest_speed >= 0.0) {
            return Err(Error::Config("tau, contact_stiffness and rest_speed out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub tracking: f64,
    pub alignment: f64,
    pub dist_obj: f64,
    pub dist_base1: f64,
    pub dist_base2: f64,
    pub internal_forces: f64,
    pub contacts: f64,
    pub stand: f64,
    pub obj_acc: f64,
    pub action_rate: f64,
    pub ang_vel: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub const NAMES: [&'static str; 12] = [
        "r_tracking",
        "r_alignment",
        "p_dist_obj",
        "p_dist_base1",
        "p_dist_base2",
        "p_int_forces",
        "p_contacts",
        "p_stand",
        "p_obj_acc",
        "p_action_rate",
        "p_ang_vel",
        "reward_total",
    ];

    fn terms(&self) -> [f64; 11] {
        [
            self.tracking,
            self.alignment,
            self.dist_obj,
            self.dist_base1,
            self.dist_base2,
            self.internal_forces,
            self.contacts,
            self.stand,
            self.obj_acc,
            self.action_rate,
            self.ang_vel,
        ]
    }

    pub fn to_array(&self) -> [f64; 12] {
        let t = self.terms();
        std::array::from_fn(|i| if i < 11 { t[i] } else { self.total })
    }

    fn with_total(mut self) -> Self {
        self.total = self.terms().iter().sum();
        self
    }
}

/// Everything the reward needs from one high-level step.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardInputs<'a> {
    /// Unit command in the object frame.
    pub command: Vec2,
    /// Object linear velocity in the object frame.
    pub object_velocity: Vec2,
    /// World-frame object linear velocity before and after the step.
    pub object_velocity_world_prev: Vec2,
    pub object_velocity_world: Vec2,
    pub dt: f64,
    /// Nearest-obstacle distance of the object, agent1 and agent2 frames.
    pub d_min: [f64; 3],
    pub action: Action,
    pub action_prev: Action,
    /// Penetration depth of agent1, agent2, bar.
    pub penetrations: [f64; 3],
    /// Last `t_stand + 1` object positions, oldest first.
    pub history: &'a [Vec2],
    pub base_yaw_rates: [f64; 2],
}

pub fn tracking_reward(cfg: &RewardConfig, cmd: Vec2, v: Vec2) -> f64 {
    let speed = v.norm();
    if speed > cfg.rest_speed {
        cfg.w1 * cmd.dot(v / speed)
    } else {
        0.0
    }
}

pub fn alignment_reward(cfg: &RewardConfig, cmd: Vec2) -> f64 {
    let e = cmd.y.atan2(cmd.x).abs() - std::f64::consts::FRAC_PI_2;
    cfg.w2 * e * e
}

pub fn obstacle_penalty(cfg: &RewardConfig, d_min: f64, d_s: f64) -> f64 {
    if d_min < cfg.delta {
        cfg.w3 * (-cfg.alpha * (d_min - d_s)).exp()
    } else {
        0.0
    }
}

/// Penalizes opposing lateral commands, which squeeze or stretch the bar.
pub fn internal_force_penalty(cfg: &RewardConfig, action: &Action) -> f64 {
    cfg.w4 * ((action[1] - action[4]).abs() - 1.0).exp()
}

pub fn contact_penalty(cfg: &RewardConfig, penetrations: &[f64]) -> f64 {
    let total: f64 = penetrations
        .iter()
        .map(|d| cfg.contact_stiffness * d.max(0.0))
        .filter(|&f| f > cfg.contact_threshold)
        .sum();
    cfg.w5 * total
}

/// Cumulative per-axis displacement of the object over the history window.
pub fn stand_penalty(cfg: &RewardConfig, history: &[Vec2]) -> f64 {
    let (mut dx, mut dy) = (0.0, 0.0);
    for w in history.windows(2) {
        dx += (w[1].x - w[0].x).abs();
        dy += (w[1].y - w[0].y).abs();
    }
    if dx < cfg.tau && dy < cfg.tau {
        cfg.w6 * (-cfg.beta * (dx * dx + dy * dy).sqrt()).exp()
    } else {
        0.0
    }
}

/// `(object acceleration, action rate, base yaw rate)` penalties.
pub fn regularizers(
    cfg: &RewardConfig,
    v_prev: Vec2,
    v: Vec2,
    dt: f64,
    action_prev: &Action,
    action: &Action,
    yaw_rates: [f64; 2],
) -> (f64, f64, f64) {
    let acc = (v - v_prev) / dt;
    let rate: f64 = action_prev
        .iter()
        .zip(action)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    (
        cfg.w7 * acc.norm_squared(),
        cfg.w8 * rate,
        cfg.w9 * (yaw_rates[0] * yaw_rates[0] + yaw_rates[1] * yaw_rates[1]),
    )
}

pub fn compute(cfg: &RewardConfig, x: &RewardInputs<'_>) -> RewardBreakdown {
    let (obj_acc, action_rate, ang_vel) = regularizers(
        cfg,
        x.object_velocity_world_prev,
        x.object_velocity_world,
        x.dt,
        &x.action_prev,
        &x.action,
        x.base_yaw_rates,
    );
    RewardBreakdown {
        tracking: tracking_reward(cfg, x.command, x.object_velocity),
        alignment: alignment_reward(cfg, x.command),
        dist_obj: obstacle_penalty(cfg, x.d_min[0], cfg.d_s_obj),
        dist_base1: obstacle_penalty(cfg, x.d_min[1], cfg.d_s_base),
        dist_base2: obstacle_penalty(cfg, x.d_min[2], cfg.d_s_base),
        internal_forces: internal_force_penalty(cfg, &x.action),
        contacts: contact_penalty(cfg, &x.penetrations),
        stand: stand_penalty(cfg, x.history),
        obj_acc,
        action_rate,
        ang_vel,
        total: 0.0,
    }
    .with_total()
}

/// Distance from a frame origin to the nearest obstacle boundary at time
/// `t`; infinite with no obstacles.
pub fn d_min(terrain: &Terrain, p: Vec2, t: f64) -> f64 {
    terrain
        .obstacles()
        .map(|b| point_box_distance(p, b, t))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg() -> RewardConfig {
        RewardConfig::default()
    }

    #[test]
    fn tracking_examples() {
        let c = cfg();
        let cmd = Vec2::new(1.0, 0.0);
        assert_abs_diff_eq!(tracking_reward(&c, cmd, Vec2::new(0.3, 0.0)), -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(tracking_reward(&c, cmd, Vec2::new(0.0, 0.3)), 0.0, epsilon = 1e-15);
        assert_eq!(tracking_reward(&c, cmd, Vec2::new(5e-4, 0.0)), 0.0);
    }

    #[test]
    fn alignment_examples() {
        let c = cfg();
        assert_abs_diff_eq!(alignment_reward(&c, Vec2::new(0.0, 1.0)), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(alignment_reward(&c, Vec2::new(0.0, -1.0)), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(alignment_reward(&c, Vec2::new(1.0, 0.0)), -1.2337, epsilon = 1e-4);
    }

    #[test]
    fn obstacle_examples() {
        let c = cfg();
        assert_abs_diff_eq!(obstacle_penalty(&c, 0.6, 0.6), -7.5, epsilon = 1e-15);
        assert_eq!(obstacle_penalty(&c, 2.0, 0.6), 0.0);
        assert_abs_diff_eq!(obstacle_penalty(&c, 1.6, 0.6), -3.405e-4, epsilon = 1e-7);
        // Truncation residual at delta.
        let jump = obstacle_penalty(&c, 2.0 - 1e-12, 0.6).abs();
        assert!(jump < 6.3e-6 && jump > 6.1e-6);
    }

    #[test]
    fn internal_force_examples() {
        let c = cfg();
        let mut a = [0.0; 6];
        assert_abs_diff_eq!(internal_force_penalty(&c, &a), -0.2 * (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(internal_force_penalty(&c, &a), -0.07358, epsilon = 1e-5);
        a[1] = 0.8;
        a[4] = -0.8;
        assert_abs_diff_eq!(internal_force_penalty(&c, &a), -0.3644, epsilon = 1e-4);
    }

    #[test]
    fn contact_examples() {
        let c = cfg();
        assert_eq!(contact_penalty(&c, &[]), 0.0);
        assert_abs_diff_eq!(contact_penalty(&c, &[0.01]), -25.0, epsilon = 1e-12);
        assert_eq!(contact_penalty(&c, &[0.0005]), 0.0);
    }

    #[test]
    fn stand_examples() {
        let c = cfg();
        let still = vec![Vec2::new(1.0, 1.0); 11];
        assert_abs_diff_eq!(stand_penalty(&c, &still), -0.1, epsilon = 1e-15);
        let moving: Vec<Vec2> = (0..11).map(|i| Vec2::new(0.02 * i as f64, 0.0)).collect();
        assert_eq!(stand_penalty(&c, &moving), 0.0);
        let diag: Vec<Vec2> = (0..11).map(|i| Vec2::new(0.01 * i as f64, 0.01 * i as f64)).collect();
        assert_abs_diff_eq!(stand_penalty(&c, &diag), -1.199e-2, epsilon = 1e-5);
    }

    #[test]
    fn regularizer_examples() {
        let c = cfg();
        let v = Vec2::new(0.3, 0.1);
        let a = [0.1; 6];
        assert_eq!(regularizers(&c, v, v, 0.05, &a, &a, [0.0, 0.0]), (0.0, 0.0, 0.0));
        let mut b = a;
        b[0] += 1.0;
        let (_, rate, ang) = regularizers(&c, v, v, 0.05, &a, &b, [0.8, 0.8]);
        assert_abs_diff_eq!(rate, -0.0005, epsilon = 1e-15);
        assert_abs_diff_eq!(ang, -0.128, epsilon = 1e-15);
    }

    #[test]
    fn total_is_sum_of_terms() {
        let c = cfg();
        let hist = vec![Vec2::ZERO; 11];
        let x = RewardInputs {
            command: Vec2::new(0.6, 0.8),
            object_velocity: Vec2::new(0.2, 0.1),
            object_velocity_world_prev: Vec2::new(0.1, 0.0),
            object_velocity_world: Vec2::new(0.2, 0.1),
            dt: 0.05,
            d_min: [0.5, 1.0, 3.0],
            action: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            action_prev: [0.0; 6],
            penetrations: [0.0, 0.01, 0.0],
            history: &hist,
            base_yaw_rates: [0.3, 0.2],
        };
        let r = compute(&c, &x);
        let arr = r.to_array();
        assert_eq!(arr[11], arr[..11].iter().sum::<f64>());
        assert_eq!(r.dist_base2, 0.0);
        assert!(arr[..11].iter().skip(2).all(|&t| t <= 0.0));
    }
}
