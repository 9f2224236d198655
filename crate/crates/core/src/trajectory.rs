//! Per-step trajectory records, CSV log I/O and path-length helpers.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose2, Vec2};
use crate::reward::RewardBreakdown;
use crate::sim::{Action, SystemState, Twist};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameSample {
    pub pose: Pose2,
    pub velocity: Twist,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub time: f64,
    pub agent1: FrameSample,
    pub agent2: FrameSample,
    pub object: FrameSample,
    pub action: Action,
    pub reward: RewardBreakdown,
    /// Penetration of agent1, agent2, bar.
    pub penetrations: [f64; 3],
}

impl TrajectoryRecord {
    pub fn from_state(state: &SystemState, action: Action, reward: RewardBreakdown, penetrations: [f64; 3]) -> Self {
        let agent = |a: &crate::sim::AgentState| FrameSample {
            pose: a.pose,
            velocity: Twist {
                linear: a.velocity_world,
                angular: a.yaw_rate,
            },
        };
        Self {
            step: state.steps,
            time: state.time,
            agent1: agent(&state.agent1),
            agent2: agent(&state.agent2),
            object: FrameSample {
                pose: state.object_pose,
                velocity: state.object_velocity,
            },
            action,
            reward,
            penetrations,
        }
    }

    fn fields(&self) -> Vec<f64> {
        let mut v = vec![self.time];
        for f in [&self.agent1, &self.agent2, &self.object] {
            v.extend([f.pose.position.x, f.pose.position.y, f.pose.yaw]);
            v.extend(f.velocity.to_array());
        }
        v.extend(self.action);
        v.extend(self.reward.to_array());
        v.extend(self.penetrations);
        v
    }
}

pub fn header() -> Vec<String> {
    let mut h = vec!["step".to_string(), "time".to_string()];
    for body in ["a1", "a2", "obj"] {
        for f in ["x", "y", "yaw", "vx", "vy", "wz"] {
            h.push(format!("{body}_{f}"));
        }
    }
    for i in 0..6 {
        h.push(format!("action_{i}"));
    }
    h.extend(RewardBreakdown::NAMES.iter().map(|s| s.to_string()));
    h.extend(["pen_a1", "pen_a2", "pen_bar"].map(String::from));
    h
}

pub fn write_csv<W: Write>(records: &[TrajectoryRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header())?;
    for r in records {
        let mut row = vec![r.step.to_string()];
        row.extend(r.fields().into_iter().map(|x| format!("{x}")));
        wr.write_record(row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<TrajectoryRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let expected = header();
    let got: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    if got != expected {
        return Err(Error::Parse("unexpected trajectory log header".into()));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let step: usize = row[0].parse().map_err(|_| Error::Parse("bad step".into()))?;
        let v: Vec<f64> = row
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {s:?}"))))
            .collect::<Result<_>>()?;
        let frame = |i: usize| FrameSample {
            pose: Pose2 {
                position: Vec2::new(v[i], v[i + 1]),
                yaw: v[i + 2],
            },
            velocity: Twist::new(v[i + 3], v[i + 4], v[i + 5]),
        };
        let r12 = &v[25..37];
        out.push(TrajectoryRecord {
            step,
            time: v[0],
            agent1: frame(1),
            agent2: frame(7),
            object: frame(13),
            action: std::array::from_fn(|i| v[19 + i]),
            reward: RewardBreakdown {
                tracking: r12[0],
                alignment: r12[1],
                dist_obj: r12[2],
                dist_base1: r12[3],
                dist_base2: r12[4],
                internal_forces: r12[5],
                contacts: r12[6],
                stand: r12[7],
                obj_acc: r12[8],
                action_rate: r12[9],
                ang_vel: r12[10],
                total: r12[11],
            },
            penetrations: [v[37], v[38], v[39]],
        });
    }
    Ok(out)
}

pub fn save_csv(records: &[TrajectoryRecord], path: impl AsRef<Path>) -> Result<()> {
    write_csv(records, std::fs::File::create(path)?)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<TrajectoryRecord>> {
    read_csv(std::fs::File::open(path)?)
}

/// Sum of consecutive position increments.
pub fn path_length(points: impl IntoIterator<Item = Vec2>) -> f64 {
    let mut it = points.into_iter();
    let Some(mut prev) = it.next() else {
        return 0.0;
    };
    let mut total = 0.0;
    for p in it {
        total += p.distance(prev);
        prev = p;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PathLengths {
    pub agent1: f64,
    pub agent2: f64,
    pub object: f64,
}

pub fn path_lengths(records: &[TrajectoryRecord]) -> PathLengths {
    PathLengths {
        agent1: path_length(records.iter().map(|r| r.agent1.pose.position)),
        agent2: path_length(records.iter().map(|r| r.agent2.pose.position)),
        object: path_length(records.iter().map(|r| r.object.pose.position)),
    }
}

/// Per-frame planar paths for plotting: `time, obj_x, obj_y, a1_x, a1_y, a2_x, a2_y`.
pub fn write_frame_paths<W: Write>(records: &[TrajectoryRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["time", "obj_x", "obj_y", "a1_x", "a1_y", "a2_x", "a2_y"])?;
    for r in records {
        let p = [r.object.pose.position, r.agent1.pose.position, r.agent2.pose.position];
        let mut row = vec![format!("{}", r.time)];
        row.extend(p.iter().flat_map(|v| [format!("{}", v.x), format!("{}", v.y)]));
        wr.write_record(row)?;
    }
    wr.flush()?;
    Ok(())
}
