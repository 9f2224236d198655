//! Environment shell: observation assembly, action bounding, the episode
//! loop and a heuristic tracking controller.

use serde::{Deserialize, Serialize};

use crate::elevation::{self, HeightMap, PerceptionConfig};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2, Vec2};
use crate::reward::{self, RewardBreakdown, RewardConfig, RewardInputs};
use crate::sim::{
    check_termination, Action, BodyId, SystemParams, SystemState, Simulator, StepOutcome, TerminationParams,
    TerminationReason,
};
use crate::terrain::{Scenario, Terrain};
use crate::trajectory::{path_lengths, PathLengths, TrajectoryRecord};
use crate::waypoints::{update_curriculum, CurriculumState, PathAssignment};

/// Object velocity 3, command 2, last action 6, base velocities 6, relative yaws 2.
pub const PROPRIO_LEN: usize = 19;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub proprio: [f64; PROPRIO_LEN],
    /// Row-major policy height map.
    pub extero: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub resolution: f64,
}

impl Observation {
    pub fn len(&self) -> usize {
        PROPRIO_LEN + self.extero.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.proprio.to_vec();
        v.extend_from_slice(&self.extero);
        v
    }

    pub fn object_velocity(&self) -> [f64; 3] {
        [self.proprio[0], self.proprio[1], self.proprio[2]]
    }

    pub fn command(&self) -> Vec2 {
        Vec2::new(self.proprio[3], self.proprio[4])
    }

    pub fn last_action(&self) -> Action {
        std::array::from_fn(|i| self.proprio[5 + i])
    }

    /// `(v_x, v_y, ω_z)` of agent `i` (0 or 1), object frame.
    pub fn base_velocity(&self, i: usize) -> [f64; 3] {
        let o = 11 + 3 * i;
        [self.proprio[o], self.proprio[o + 1], self.proprio[o + 2]]
    }

    pub fn relative_yaws(&self) -> [f64; 2] {
        [self.proprio[17], self.proprio[18]]
    }

    pub fn height(&self, r: usize, c: usize) -> f64 {
        self.extero[r * self.cols + c]
    }
}

/// What one agent sees in the decentralized setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalObservation {
    pub object_velocity: [f64; 3],
    pub command: [f64; 2],
    pub own_velocity: [f64; 3],
    pub own_relative_yaw: f64,
    /// Own half of the map: all rows, the columns on this agent's side of
    /// the object x-axis, row-major.
    pub map_half: Vec<f64>,
}

/// Assembles the observation. Velocities are rotated into the object frame.
pub fn observe(state: &SystemState, cmd: Vec2, last_action: &Action, map: &HeightMap, dims: (usize, usize)) -> Result<Observation> {
    if (map.rows, map.cols) != dims {
        return Err(Error::Dimension {
            expected: dims.0 * dims.1,
            actual: map.rows * map.cols,
        });
    }
    let yaw = state.object_pose.yaw;
    let v = state.object_velocity.linear.rotated(-yaw);
    let mut p = [0.0; PROPRIO_LEN];
    p[..3].copy_from_slice(&[v.x, v.y, state.object_velocity.angular]);
    p[3] = cmd.x;
    p[4] = cmd.y;
    p[5..11].copy_from_slice(last_action);
    for (i, a) in [&state.agent1, &state.agent2].into_iter().enumerate() {
        let vb = a.velocity_world.rotated(-yaw);
        p[11 + 3 * i..14 + 3 * i].copy_from_slice(&[vb.x, vb.y, a.yaw_rate]);
    }
    p[17..19].copy_from_slice(&state.relative_yaws());
    Ok(Observation {
        proprio: p,
        extero: map.cells.clone(),
        rows: map.rows,
        cols: map.cols,
        resolution: map.resolution,
    })
}

/// `v_max · tanh(raw / v_max)`, componentwise; NaN inputs map to 0.
pub fn bound_action(raw: &Action, v_max: f64) -> Action {
    raw.map(|x| if x.is_nan() { 0.0 } else { v_max * (x / v_max).tanh() })
}

pub fn split_observation(obs: &Observation) -> (LocalObservation, LocalObservation) {
    let half = obs.cols / 2;
    let cols_of = |range: std::ops::Range<usize>| -> Vec<f64> {
        (0..obs.rows)
            .flat_map(|r| range.clone().map(move |c| (r, c)))
            .map(|(r, c)| obs.height(r, c))
            .collect()
    };
    let yaws = obs.relative_yaws();
    let local = |i: usize, map_half: Vec<f64>| LocalObservation {
        object_velocity: obs.object_velocity(),
        command: [obs.proprio[3], obs.proprio[4]],
        own_velocity: obs.base_velocity(i),
        own_relative_yaw: yaws[i],
        map_half,
    };
    // Agent1 sits on the negative object y side, i.e. the low columns.
    (local(0, cols_of(0..half)), local(1, cols_of(half..obs.cols)))
}

/// Rebuilds the full row-major map from the two halves.
pub fn join_map_halves(a: &LocalObservation, b: &LocalObservation, rows: usize) -> Vec<f64> {
    let (wa, wb) = (a.map_half.len() / rows.max(1), b.map_half.len() / rows.max(1));
    let mut out = Vec::with_capacity(a.map_half.len() + b.map_half.len());
    for r in 0..rows {
        out.extend_from_slice(&a.map_half[r * wa..(r + 1) * wa]);
        out.extend_from_slice(&b.map_half[r * wb..(r + 1) * wb]);
    }
    out
}

pub trait Controller {
    /// Raw, unbounded action.
    fn act(&mut self, obs: &Observation) -> Action;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroController;

impl Controller for ZeroController {
    fn act(&mut self, _obs: &Observation) -> Action {
        [0.0; 6]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    pub speed: f64,
    pub repulsion_gain: f64,
    pub repulsion_cutoff: f64,
    /// Cells above this height repel.
    pub obstacle_height: f64,
    pub yaw_gain: f64,
    pub max_yaw_rate: f64,
    /// Gain pulling each base yaw back onto the object yaw.
    pub base_yaw_gain: f64,
    pub bar_length: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            speed: 0.6,
            repulsion_gain: 0.4,
            repulsion_cutoff: 0.9,
            obstacle_height: 0.2,
            yaw_gain: 1.5,
            max_yaw_rate: 0.5,
            base_yaw_gain: 1.0,
            bar_length: 2.0,
        }
    }
}

/// Stand-in for a trained policy: follow the command, get pushed away from
/// high cells, and turn so the object y-axis lines up with the command.
#[derive(Debug, Clone, Default)]
pub struct HeuristicTracker {
    pub cfg: TrackerConfig,
}

impl HeuristicTracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self { cfg }
    }

    /// Repulsive velocity at object-frame point `p` from high map cells.
    pub fn repulsion(&self, obs: &Observation, p: Vec2) -> Vec2 {
        let cfg = &self.cfg;
        let mut push = Vec2::ZERO;
        for r in 0..obs.rows {
            for c in 0..obs.cols {
                if obs.height(r, c) <= cfg.obstacle_height {
                    continue;
                }
                let cell = Vec2::new(
                    (r as f64 - (obs.rows as f64 - 1.0) / 2.0) * obs.resolution,
                    (c as f64 - (obs.cols as f64 - 1.0) / 2.0) * obs.resolution,
                );
                let d = p - cell;
                let dist = d.norm();
                if dist < cfg.repulsion_cutoff && dist > 1e-9 {
                    push += d / dist * ((cfg.repulsion_cutoff - dist) / cfg.repulsion_cutoff);
                }
            }
        }
        push * cfg.repulsion_gain
    }
}

impl Controller for HeuristicTracker {
    fn act(&mut self, obs: &Observation) -> Action {
        let cfg = &self.cfg;
        let cmd = obs.command();
        let base = cmd * cfg.speed;
        let half = cfg.bar_length / 2.0;
        let anchors = [Vec2::new(0.0, -half), Vec2::new(0.0, half)];
        let bar_push = self.repulsion(obs, Vec2::ZERO);

        // Rotate so the command points along ±y, whichever is closer.
        let phi = cmd.y.atan2(cmd.x);
        let target = if phi >= 0.0 { std::f64::consts::FRAC_PI_2 } else { -std::f64::consts::FRAC_PI_2 };
        let omega = (cfg.yaw_gain * wrap_angle(phi - target)).clamp(-cfg.max_yaw_rate, cfg.max_yaw_rate);
        let yaws = obs.relative_yaws();

        let mut a = [0.0; 6];
        for (i, anchor) in anchors.into_iter().enumerate() {
            // Rigid rotation about the midpoint: ω × anchor.
            let spin = Vec2::new(-omega * anchor.y, omega * anchor.x);
            let v = base + spin + self.repulsion(obs, anchor) + bar_push;
            a[3 * i] = v.x;
            a[3 * i + 1] = v.y;
            a[3 * i + 2] = omega - cfg.base_yaw_gain * yaws[i];
        }
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub system: SystemParams,
    pub terminations: TerminationParams,
    pub rewards: RewardConfig,
    pub perception: PerceptionConfig,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.rewards.validate()?;
        self.perception.validate()
    }

    pub fn simulator(&self) -> Simulator {
        Simulator::new(self.system.clone(), self.terminations.clone(), self.rewards.t_stand + 1)
    }

    pub fn max_steps(&self) -> usize {
        (self.terminations.episode_length / self.system.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub terminated: Option<TerminationReason>,
    pub record: TrajectoryRecord,
}

/// Single-system environment with `reset` / `step`.
#[derive(Debug, Clone)]
pub struct CarryEnv {
    pub cfg: EnvConfig,
    pub terrain: Terrain,
    pub start: Pose2,
    pub initial_path: PathAssignment,
    pub seed: u64,
    sim: Simulator,
    state: Option<SystemState>,
    path: PathAssignment,
    command: Vec2,
    last_action: Action,
    done: bool,
    deep_events: usize,
    in_deep_contact: bool,
}

impl CarryEnv {
    pub fn new(cfg: EnvConfig, terrain: Terrain, start: Pose2, path: PathAssignment, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let sim = cfg.simulator();
        Ok(Self {
            cfg,
            terrain,
            start,
            initial_path: path.clone(),
            seed,
            sim,
            state: None,
            path,
            command: Vec2::new(1.0, 0.0),
            last_action: [0.0; 6],
            done: false,
            deep_events: 0,
            in_deep_contact: false,
        })
    }

    pub fn from_scenario(cfg: EnvConfig, scenario: &Scenario, seed: u64) -> Result<Self> {
        Self::new(
            cfg,
            scenario.terrain.clone(),
            scenario.start,
            PathAssignment::new(scenario.waypoints.clone(), 0),
            seed,
        )
    }

    pub fn state(&self) -> Option<&SystemState> {
        self.state.as_ref()
    }

    pub fn path(&self) -> &PathAssignment {
        &self.path
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Steps in which some body entered a deep collision.
    pub fn deep_collision_events(&self) -> usize {
        self.deep_events
    }

    pub fn observation_len(&self) -> usize {
        let (r, c) = self.cfg.perception.policy_dims();
        PROPRIO_LEN + r * c
    }

    fn update_command(&mut self, pose: &Pose2) {
        self.path.advance(pose.position, self.cfg.terminations.reach_radius);
        if let Some(wp) = self.path.current() {
            if let Some(dir) = (wp - pose.position).normalized() {
                self.command = dir.rotated(-pose.yaw);
            }
        }
    }

    fn observe_state(&self, state: &SystemState) -> Result<Observation> {
        let pc = &self.cfg.perception;
        let mut map = elevation::policy_map(
            &self.terrain,
            [&state.agent1.pose, &state.agent2.pose],
            &state.object_pose,
            state.time,
            pc,
        );
        if pc.augment {
            let seed = self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(state.steps as u64);
            map = elevation::augment(&map, pc, seed);
        }
        if pc.relative_heights {
            let ground = self.terrain.height_unchecked(state.object_pose.position, state.time);
            for h in &mut map.cells {
                *h -= ground;
            }
        }
        observe(state, self.command, &self.last_action, &map, pc.policy_dims())
    }

    pub fn reset(&mut self) -> Result<Observation> {
        let state = self.sim.reset(&self.terrain, self.start)?;
        self.path = self.initial_path.clone();
        self.path.reset();
        self.last_action = [0.0; 6];
        self.command = Vec2::new(1.0, 0.0);
        self.done = false;
        self.deep_events = 0;
        self.in_deep_contact = false;
        self.update_command(&state.object_pose);
        let obs = self.observe_state(&state)?;
        self.state = Some(state);
        Ok(obs)
    }

    /// Record of the current state with zero action and reward.
    pub fn initial_record(&self) -> Option<TrajectoryRecord> {
        self.state
            .as_ref()
            .map(|s| TrajectoryRecord::from_state(s, [0.0; 6], RewardBreakdown::default(), [0.0; 3]))
    }

    pub fn step(&mut self, raw: &Action) -> Result<StepResult> {
        let prev = self
            .state
            .take()
            .ok_or_else(|| Error::Config("step called before reset".into()))?;
        if self.done {
            self.state = Some(prev);
            return Err(Error::Config("episode is over; call reset".into()));
        }
        let action = bound_action(raw, self.cfg.system.v_max);
        let dt = self.cfg.system.dt;
        let out: StepOutcome = self.sim.step(&prev, &action, &self.terrain, None, dt)?;
        let s = out.state;
        self.update_command(&s.object_pose);
        let terminated = check_termination(&s, Some(&self.path), &self.cfg.terminations);

        let pen = BodyId::ALL.map(|b| out.contacts.iter().find(|c| c.0 == b).map_or(0.0, |c| c.1));
        let deep = pen.iter().any(|&d| d > self.cfg.terminations.deep_penetration);
        if deep && !self.in_deep_contact {
            self.deep_events += 1;
        }
        self.in_deep_contact = deep;

        let t = s.time;
        let history: Vec<Vec2> = s.position_history.iter().copied().collect();
        let inputs = RewardInputs {
            command: self.command,
            object_velocity: s.object_velocity.linear.rotated(-s.object_pose.yaw),
            object_velocity_world_prev: prev.object_velocity.linear,
            object_velocity_world: s.object_velocity.linear,
            dt,
            d_min: [
                reward::d_min(&self.terrain, s.object_pose.position, t),
                reward::d_min(&self.terrain, s.agent1.pose.position, t),
                reward::d_min(&self.terrain, s.agent2.pose.position, t),
            ],
            action,
            action_prev: self.last_action,
            penetrations: pen,
            history: &history,
            base_yaw_rates: [s.agent1.yaw_rate, s.agent2.yaw_rate],
        };
        let reward = reward::compute(&self.cfg.rewards, &inputs);
        self.last_action = action;
        let record = TrajectoryRecord::from_state(&s, action, reward, pen);
        let observation = self.observe_state(&s)?;
        self.done = terminated.is_some();
        self.state = Some(s);
        Ok(StepResult {
            observation,
            reward,
            terminated,
            record,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub reason: TerminationReason,
    pub steps: usize,
    pub time: f64,
    pub reached_fraction: f64,
    pub lengths: PathLengths,
    pub total_reward: f64,
    pub deep_collision_events: usize,
    pub clamped_actions: usize,
    /// Curriculum state after the end-of-episode update, when tracked.
    pub curriculum: Option<CurriculumState>,
}

impl EpisodeOutcome {
    pub fn success(&self) -> bool {
        self.reason == TerminationReason::Goal && self.deep_collision_events == 0
    }
}

/// Resets, runs `controller` until termination and applies one curriculum
/// update at the end. Returns the outcome and the trajectory log (the
/// initial state is the first record).
pub fn run_episode(
    env: &mut CarryEnv,
    controller: &mut dyn Controller,
    curriculum: Option<CurriculumState>,
) -> Result<(EpisodeOutcome, Vec<TrajectoryRecord>)> {
    let mut obs = env.reset()?;
    let mut log = Vec::with_capacity(env.cfg.max_steps() + 1);
    log.extend(env.initial_record());
    let mut total = 0.0;
    let reason = loop {
        let raw = controller.act(&obs);
        let r = env.step(&raw)?;
        total += r.reward.total;
        log.push(r.record);
        obs = r.observation;
        if let Some(reason) = r.terminated {
            break reason;
        }
    };
    let state = env.state().expect("state after step");
    let reached_fraction = env.path().reached_fraction();
    let outcome = EpisodeOutcome {
        reason,
        steps: state.steps,
        time: state.time,
        reached_fraction,
        lengths: path_lengths(&log),
        total_reward: total,
        deep_collision_events: env.deep_collision_events(),
        clamped_actions: state.clamped_actions,
        curriculum: curriculum.map(|c| update_curriculum(c, reached_fraction, env.seed)),
    };
    Ok((outcome, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{scenario, ScenarioKind};
    use approx::assert_abs_diff_eq;

    fn flat_map(rows: usize, cols: usize) -> HeightMap {
        HeightMap::new(Pose2::identity(), rows, cols, 0.3)
    }

    fn obs_with(cmd: Vec2, map: &HeightMap) -> Observation {
        let sim = EnvConfig::default().simulator();
        let t = Terrain::empty(Vec2::new(-9.0, -9.0), Vec2::new(9.0, 9.0));
        let s = sim.reset(&t, Pose2::identity()).unwrap();
        observe(&s, cmd, &[0.0; 6], map, (map.rows, map.cols)).unwrap()
    }

    #[test]
    fn observation_at_rest() {
        let o = obs_with(Vec2::new(0.6, 0.8), &flat_map(13, 20));
        assert_eq!(o.len(), 279);
        let mut expected = [0.0; PROPRIO_LEN];
        expected[3] = 0.6;
        expected[4] = 0.8;
        assert_eq!(o.proprio, expected);
        assert_eq!(o.relative_yaws(), [0.0, 0.0]);
    }

    #[test]
    fn observation_dimension_mismatch() {
        let sim = EnvConfig::default().simulator();
        let t = Terrain::empty(Vec2::new(-9.0, -9.0), Vec2::new(9.0, 9.0));
        let s = sim.reset(&t, Pose2::identity()).unwrap();
        assert!(matches!(
            observe(&s, Vec2::new(1.0, 0.0), &[0.0; 6], &flat_map(12, 20), (13, 20)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn bound_action_properties() {
        assert_eq!(bound_action(&[0.0; 6], 0.8), [0.0; 6]);
        let big = bound_action(&[f64::INFINITY, -f64::INFINITY, 1e9, 0.1, -0.1, 3.0], 0.8);
        assert_eq!(big[0], 0.8);
        assert_eq!(big[1], -0.8);
        assert!(big[2] <= 0.8);
        assert!(big[5] < 0.8);
        assert_abs_diff_eq!(big[3], -big[4], epsilon = 0.0);
        assert!(big[3] < 0.1 && big[3] > 0.099);
    }

    #[test]
    fn split_and_rejoin() {
        let mut m = flat_map(13, 20);
        for (i, h) in m.cells.iter_mut().enumerate() {
            *h = i as f64;
        }
        let mut o = obs_with(Vec2::new(1.0, 0.0), &m);
        o.proprio[11..17].copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let (a, b) = split_observation(&o);
        assert_eq!(a.own_velocity, [1.0, 2.0, 3.0]);
        assert_eq!(b.own_velocity, [4.0, 5.0, 6.0]);
        assert_eq!(a.object_velocity, b.object_velocity);
        assert_eq!(a.command, b.command);
        assert_eq!(a.map_half.len(), 130);
        assert_eq!(join_map_halves(&a, &b, 13), o.extero);
    }

    #[test]
    fn tracker_follows_command_on_empty_map() {
        let mut t = HeuristicTracker::default();
        let o = obs_with(Vec2::new(0.0, 1.0), &flat_map(13, 20));
        let a = t.act(&o);
        assert_abs_diff_eq!(a[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(a[4], 0.6, epsilon = 1e-12);

        // Command along x: the translation part is (0.6, 0); the turn adds
        // equal and opposite x components at the two agents.
        let a = t.act(&obs_with(Vec2::new(1.0, 0.0), &flat_map(13, 20)));
        assert_abs_diff_eq!((a[0] + a[3]) / 2.0, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn tracker_slows_near_a_wall() {
        let mut t = HeuristicTracker::default();
        let mut m = flat_map(13, 20);
        for c in 0..20 {
            let i = m.index(8, c);
            m.cells[i] = 1.0;
        }
        let free = t.act(&obs_with(Vec2::new(1.0, 0.0), &flat_map(13, 20)));
        let walled = t.act(&obs_with(Vec2::new(1.0, 0.0), &m));
        // Wall at x = 0.6 m pushes both agents toward -x.
        assert!(walled[0] < free[0] - 0.05);
        assert!(walled[3] < free[3] - 0.05);
        let bounded = bound_action(&walled, 0.8);
        assert!(bounded.iter().all(|v| v.abs() < 0.8));
    }

    #[test]
    fn zero_controller_times_out_with_stand_penalty() {
        let cfg = EnvConfig {
            terminations: TerminationParams {
                episode_length: 2.0,
                ..TerminationParams::default()
            },
            perception: PerceptionConfig {
                sense_extent: 4.0,
                sense_resolution: 0.1,
                ..PerceptionConfig::default()
            },
            ..EnvConfig::default()
        };
        let sc = scenario(ScenarioKind::Empty, false);
        let mut env = CarryEnv::from_scenario(cfg, &sc, 1).unwrap();
        let (out, log) = run_episode(&mut env, &mut ZeroController, Some(CurriculumState::new(3, 10))).unwrap();
        assert_eq!(out.reason, TerminationReason::Timeout);
        assert_eq!(out.steps, 40);
        assert_eq!(log.len(), 41);
        assert!(log[1..].iter().all(|r| r.reward.stand == -0.1));
        assert_eq!(out.lengths.object, 0.0);
        assert_eq!(out.curriculum, Some(CurriculumState::new(2, 10)));
    }
}
