//! Kinematic simulation of two agents rigidly coupled by a bar.
//!
//! The frozen locomotion controllers are abstracted as a first-order lag on
//! the commanded base velocity. After every integration substep the agents
//! are projected back onto the bar-length constraint, symmetrically, so the
//! bar midpoint is preserved.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    footprint_penetration, oriented_footprint_collides, segment_box_distance, wrap_angle, Footprint, Pose2, Vec2,
};
use crate::terrain::Terrain;
use crate::waypoints::PathAssignment;

/// High-level action: `[v_x1, v_y1, ω_z1, v_x2, v_y2, ω_z2]`, object frame.
pub type Action = [f64; 6];

/// Which form of the object yaw-rate estimate to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaFormula {
    /// Relative velocity projected on the normal of the inter-agent vector.
    #[default]
    Rigid,
    /// Projection on the normal of the object position vector, divided by
    /// its norm; undefined at the world origin.
    PrintedVariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemParams {
    pub bar_length: f64,
    pub footprint: Footprint,
    pub v_min: f64,
    pub v_max: f64,
    /// Velocity-tracking time constant of the locomotion abstraction.
    pub tau_v: f64,
    /// High-level control period.
    pub dt: f64,
    /// Integration substep.
    pub substep: f64,
    pub omega_formula: OmegaFormula,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            bar_length: 2.0,
            footprint: Footprint::default(),
            v_min: -0.8,
            v_max: 0.8,
            tau_v: 0.3,
            dt: 0.05,
            substep: 0.01,
            omega_formula: OmegaFormula::Rigid,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bar_length > 0.0) {
            return Err(Error::Config("bar_length must be positive".into()));
        }
        if !(self.footprint.half_length > 0.0 && self.footprint.half_width > 0.0) {
            return Err(Error::Config("footprint extents must be positive".into()));
        }
        if !(self.v_min < self.v_max) {
            return Err(Error::Config("v_min must be below v_max".into()));
        }
        if !(self.tau_v >= 0.0 && self.dt > 0.0 && self.substep > 0.0) {
            return Err(Error::Config("tau_v, dt and substep must be non-negative / positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerminationParams {
    /// Episode length in seconds.
    pub episode_length: f64,
    /// Goal radius around the final waypoint; taken from the command
    /// settings when built from a config file.
    #[serde(skip)]
    pub reach_radius: f64,
    /// Penetration depth counted as a deep collision.
    pub deep_penetration: f64,
    /// How long a deep collision must persist before terminating.
    pub deep_duration: f64,
    /// Base tilt limit; not reachable in the planar model, kept for the record.
    pub tilt_angle: f64,
    /// Base height limit; not reachable in the planar model, kept for the record.
    pub height_threshold: f64,
}

impl Default for TerminationParams {
    fn default() -> Self {
        Self {
            episode_length: 70.0,
            reach_radius: 0.5,
            deep_penetration: 0.25,
            deep_duration: 1.0,
            tilt_angle: 0.7,
            height_threshold: 0.15,
        }
    }
}

/// Planar twist `(v_x, v_y, ω_z)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub linear: Vec2,
    pub angular: f64,
}

impl Twist {
    pub fn new(vx: f64, vy: f64, wz: f64) -> Self {
        Self {
            linear: Vec2::new(vx, vy),
            angular: wz,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.linear.x, self.linear.y, self.angular]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub pose: Pose2,
    /// Constraint-consistent world-frame linear velocity.
    pub velocity_world: Vec2,
    pub yaw_rate: f64,
    /// Last command, in the agent base frame.
    pub commanded_base: Twist,
    /// Velocity realized by the locomotion abstraction, base frame.
    pub realized_base: Twist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyId {
    Agent1,
    Agent2,
    Bar,
}

impl BodyId {
    pub const ALL: [BodyId; 3] = [BodyId::Agent1, BodyId::Agent2, BodyId::Bar];

    fn index(self) -> usize {
        match self {
            BodyId::Agent1 => 0,
            BodyId::Agent2 => 1,
            BodyId::Bar => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Goal,
    Timeout,
    /// Sustained deep penetration of an agent body.
    TiltProxy,
    /// Sustained deep penetration of the bar.
    HeightProxy,
}

impl TerminationReason {
    pub fn name(self) -> &'static str {
        match self {
            TerminationReason::Goal => "goal",
            TerminationReason::Timeout => "timeout",
            TerminationReason::TiltProxy => "tilt_proxy",
            TerminationReason::HeightProxy => "height_proxy",
        }
    }
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Object-frame position, linear velocity and yaw rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectKinematics {
    pub position: Vec2,
    pub linear_velocity: Vec2,
    pub yaw_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub agent1: AgentState,
    pub agent2: AgentState,
    pub bar_length: f64,
    pub time: f64,
    pub steps: usize,
    pub object_pose: Pose2,
    pub object_velocity: Twist,
    /// Most recent object positions, oldest first.
    pub position_history: VecDeque<Vec2>,
    pub history_capacity: usize,
    /// Continuous deep-contact time per body (agent1, agent2, bar).
    pub deep_contact_time: [f64; 3],
    /// Number of action components clamped so far.
    pub clamped_actions: usize,
}

impl SystemState {
    pub fn agent(&self, body: BodyId) -> Option<&AgentState> {
        match body {
            BodyId::Agent1 => Some(&self.agent1),
            BodyId::Agent2 => Some(&self.agent2),
            BodyId::Bar => None,
        }
    }

    pub fn inter_agent_distance(&self) -> f64 {
        self.agent1.pose.position.distance(self.agent2.pose.position)
    }

    /// Relative yaw of each agent base with respect to the object, in `(-π, π]`.
    pub fn relative_yaws(&self) -> [f64; 2] {
        [
            wrap_angle(self.agent1.pose.yaw - self.object_pose.yaw),
            wrap_angle(self.agent2.pose.yaw - self.object_pose.yaw),
        ]
    }

    fn push_history(&mut self, p: Vec2) {
        self.position_history.push_back(p);
        while self.position_history.len() > self.history_capacity {
            self.position_history.pop_front();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: SystemState,
    /// Bodies in contact with their penetration depth (> 0).
    pub contacts: Vec<(BodyId, f64)>,
    pub terminated: Option<TerminationReason>,
}

impl StepOutcome {
    pub fn penetration(&self, body: BodyId) -> f64 {
        self.contacts
            .iter()
            .find(|(b, _)| *b == body)
            .map_or(0.0, |(_, d)| *d)
    }
}

/// Object pose from the two agent positions: midpoint, with the y-axis
/// pointing from agent1 to agent2.
pub fn object_pose(p1: Vec2, p2: Vec2) -> Result<Pose2> {
    let u = (p2 - p1).normalized().ok_or(Error::DegenerateFrame)?;
    // x = y rotated by -90°.
    let x_axis = Vec2::new(u.y, -u.x);
    Ok(Pose2::new((p1 + p2) / 2.0, x_axis.angle()))
}

/// Object position, linear velocity and yaw rate from the agent states.
pub fn object_kinematics(a1: &AgentState, a2: &AgentState, formula: OmegaFormula) -> Result<ObjectKinematics> {
    let (p1, p2) = (a1.pose.position, a2.pose.position);
    let d = p2 - p1;
    let len = d.norm();
    if len <= 1e-12 {
        return Err(Error::DegenerateFrame);
    }
    let position = (p1 + p2) / 2.0;
    let linear_velocity = (a1.velocity_world + a2.velocity_world) / 2.0;
    let dv = a2.velocity_world - a1.velocity_world;
    let yaw_rate = match formula {
        OmegaFormula::Rigid => dv.dot((d / len).perp()) / len,
        OmegaFormula::PrintedVariant => {
            let r = position.norm();
            if r <= 1e-12 {
                return Err(Error::DegenerateFrame);
            }
            dv.dot(position.perp() / r) / r
        }
    };
    Ok(ObjectKinematics {
        position,
        linear_velocity,
        yaw_rate,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Simulator {
    pub params: SystemParams,
    pub limits: TerminationParams,
    /// Object positions kept for the stand-still penalty (T_stand + 1).
    pub history_len: usize,
}

impl Simulator {
    pub fn new(params: SystemParams, limits: TerminationParams, history_len: usize) -> Self {
        Self {
            params,
            limits,
            history_len: history_len.max(1),
        }
    }

    fn agent_poses(&self, object: &Pose2, yaws: [f64; 2]) -> [Pose2; 2] {
        let half = self.params.bar_length / 2.0;
        let y = object.y_axis();
        [
            Pose2::new(object.position - y * half, yaws[0]),
            Pose2::new(object.position + y * half, yaws[1]),
        ]
    }

    /// Places the agents at ±L/2 along the object y-axis, both facing the
    /// object x-axis, at rest.
    pub fn reset(&self, terrain: &Terrain, start: Pose2) -> Result<SystemState> {
        let [p1, p2] = self.agent_poses(&start, [start.yaw, start.yaw]);
        let agent = |pose| AgentState {
            pose,
            ..AgentState::default()
        };
        let mut state = SystemState {
            agent1: agent(p1),
            agent2: agent(p2),
            bar_length: self.params.bar_length,
            time: 0.0,
            steps: 0,
            object_pose: object_pose(p1.position, p2.position)?,
            object_velocity: Twist::default(),
            position_history: VecDeque::with_capacity(self.history_len),
            history_capacity: self.history_len,
            deep_contact_time: [0.0; 3],
            clamped_actions: 0,
        };
        for _ in 0..self.history_len {
            state.push_history(state.object_pose.position);
        }
        if self.penetrations(&state, terrain).iter().any(|&d| d > 0.0) {
            return Err(Error::StartInCollision);
        }
        Ok(state)
    }

    /// Penetration depth of agent1, agent2 and the bar at the state's time.
    pub fn penetrations(&self, state: &SystemState, terrain: &Terrain) -> [f64; 3] {
        let fp = &self.params.footprint;
        let (p1, p2) = (state.agent1.pose, state.agent2.pose);
        let mut out = [0.0f64; 3];
        for b in terrain.obstacles() {
            out[0] = out[0].max(footprint_penetration(&p1, fp, b, state.time));
            out[1] = out[1].max(footprint_penetration(&p2, fp, b, state.time));
            out[2] = out[2].max(-segment_box_distance(p1.position, p2.position, b, state.time));
        }
        out
    }

    /// Any body overlapping an obstacle at time `t` for the given agent poses.
    pub fn poses_collide(&self, p1: &Pose2, p2: &Pose2, terrain: &Terrain, t: f64) -> bool {
        let fp = &self.params.footprint;
        terrain.obstacles().any(|b| {
            oriented_footprint_collides(p1, fp, b, t)
                || oriented_footprint_collides(p2, fp, b, t)
                || segment_box_distance(p1.position, p2.position, b, t) < 0.0
        })
    }

    /// Advances the system by one high-level period `dt`.
    pub fn step(
        &self,
        state: &SystemState,
        action: &Action,
        terrain: &Terrain,
        path: Option<&PathAssignment>,
        dt: f64,
    ) -> Result<StepOutcome> {
        let p = &self.params;
        let mut s = state.clone();
        let mut a = *action;
        for v in &mut a {
            if !v.is_finite() {
                *v = 0.0;
                s.clamped_actions += 1;
            } else if *v < p.v_min || *v > p.v_max {
                *v = v.clamp(p.v_min, p.v_max);
                s.clamped_actions += 1;
            }
        }
        let cmds = [Twist::new(a[0], a[1], a[2]), Twist::new(a[3], a[4], a[5])];

        let n_sub = ((dt / p.substep).round() as usize).max(1);
        let h = dt / n_sub as f64;
        let blend = if p.tau_v <= 0.0 { 1.0 } else { 1.0 - (-h / p.tau_v).exp() };
        for _ in 0..n_sub {
            let obj_yaw = object_pose(s.agent1.pose.position, s.agent2.pose.position)?.yaw;
            for (agent, cmd) in [&mut s.agent1, &mut s.agent2].into_iter().zip(cmds) {
                let psi = agent.pose.yaw - obj_yaw;
                agent.commanded_base = Twist {
                    linear: cmd.linear.rotated(-psi),
                    angular: cmd.angular,
                };
                let r = &mut agent.realized_base;
                r.linear += (agent.commanded_base.linear - r.linear) * blend;
                r.angular += (agent.commanded_base.angular - r.angular) * blend;
                agent.velocity_world = r.linear.rotated(agent.pose.yaw);
                agent.yaw_rate = r.angular;
            }

            // Remove relative motion along the bar so the step is rigid to first order.
            let u = (s.agent2.pose.position - s.agent1.pose.position)
                .normalized()
                .ok_or(Error::DegenerateFrame)?;
            let stretch = (s.agent2.velocity_world - s.agent1.velocity_world).dot(u) / 2.0;
            s.agent1.velocity_world += u * stretch;
            s.agent2.velocity_world -= u * stretch;

            for agent in [&mut s.agent1, &mut s.agent2] {
                agent.pose.position += agent.velocity_world * h;
                agent.pose.yaw = wrap_angle(agent.pose.yaw + agent.yaw_rate * h);
            }

            // Exact restoration of the bar length, midpoint preserved.
            let d = s.agent2.pose.position - s.agent1.pose.position;
            let len = d.norm();
            if len <= 1e-12 {
                return Err(Error::DegenerateFrame);
            }
            let corr = d * ((len - s.bar_length) / (2.0 * len));
            s.agent1.pose.position += corr;
            s.agent2.pose.position -= corr;
        }
        s.time = state.time + dt;
        s.steps = state.steps + 1;

        let kin = object_kinematics(&s.agent1, &s.agent2, p.omega_formula)?;
        s.object_pose = object_pose(s.agent1.pose.position, s.agent2.pose.position)?;
        s.object_velocity = Twist {
            linear: kin.linear_velocity,
            angular: kin.yaw_rate,
        };
        s.push_history(s.object_pose.position);

        let pen = self.penetrations(&s, terrain);
        let mut contacts = Vec::new();
        for body in BodyId::ALL {
            let d = pen[body.index()];
            if d > 0.0 {
                contacts.push((body, d));
            }
            let timer = &mut s.deep_contact_time[body.index()];
            *timer = if d > self.limits.deep_penetration { *timer + dt } else { 0.0 };
        }
        let terminated = check_termination(&s, path, &self.limits);
        Ok(StepOutcome {
            state: s,
            contacts,
            terminated,
        })
    }
}

/// Goal when the final waypoint is the one being tracked (or all are
/// reached) and the object is within the reach radius of it; otherwise the
/// collision proxies, then the episode time limit.
pub fn check_termination(
    state: &SystemState,
    path: Option<&PathAssignment>,
    limits: &TerminationParams,
) -> Option<TerminationReason> {
    if let Some(path) = path {
        if let Some(goal) = path.goal() {
            let on_last_leg = path.next_index + 1 >= path.waypoints.len();
            if path.is_completed() || (on_last_leg && state.object_pose.position.distance(goal) < limits.reach_radius) {
                return Some(TerminationReason::Goal);
            }
        }
    }
    let sustained = |i: usize| state.deep_contact_time[i] >= limits.deep_duration - 1e-9;
    if sustained(0) || sustained(1) {
        return Some(TerminationReason::TiltProxy);
    }
    if sustained(2) {
        return Some(TerminationReason::HeightProxy);
    }
    if state.time >= limits.episode_length - 1e-9 {
        return Some(TerminationReason::Timeout);
    }
    None
}
