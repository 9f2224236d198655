//! Seeded trial batches over the benchmark scenarios and report aggregation.

use std::fmt::{self, Write as _};
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::env::{run_episode, CarryEnv, HeuristicTracker, ZeroController};
use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::prm::{run_prm, PrmConfig, PrmMode, SystemConfiguration};
use crate::terrain::{scenario, Scenario, ScenarioKind};
use crate::trajectory::{path_lengths, TrajectoryRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub trials: usize,
    pub seed: u64,
    /// Start offset along the object y-axis, uniform in `±lateral_jitter`.
    pub lateral_jitter: f64,
    /// Start yaw offset, uniform in `±yaw_jitter`.
    pub yaw_jitter: f64,
    /// Use the moving third box.
    pub dynamic: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            trials: 10,
            seed: 0,
            lateral_jitter: 0.1,
            yaw_jitter: 0.05,
            dynamic: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Heuristic,
    /// Zero action; a do-nothing reference.
    Idle,
    Prm { mode: PrmMode, n_samples: usize },
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Heuristic => f.write_str("heuristic"),
            Method::Idle => f.write_str("idle"),
            Method::Prm { mode, n_samples } => write!(f, "prm-{mode}-{n_samples}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heuristic" => return Ok(Method::Heuristic),
            "idle" => return Ok(Method::Idle),
            _ => {}
        }
        let bad = || Error::UnknownMethod(s.into());
        let rest = s.strip_prefix("prm-").ok_or_else(bad)?;
        let (mode, n) = rest.split_once('-').ok_or_else(bad)?;
        Ok(Method::Prm {
            mode: mode.parse().map_err(|_| bad())?,
            n_samples: n.parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub scenario: String,
    pub method: String,
    pub seed: u64,
    pub success: bool,
    pub reason: String,
    pub l_agent1: f64,
    pub l_agent2: f64,
    pub l_obj: f64,
    /// Mean wall-clock seconds per decision.
    pub latency: f64,
}

/// Scenario with the start pose jittered by the trial seed.
pub fn trial_scenario(kind: ScenarioKind, bench: &BenchConfig, seed: u64) -> Scenario {
    let mut sc = scenario(kind, bench.dynamic);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lateral = if bench.lateral_jitter > 0.0 {
        rng.gen_range(-bench.lateral_jitter..=bench.lateral_jitter)
    } else {
        0.0
    };
    let yaw = if bench.yaw_jitter > 0.0 {
        rng.gen_range(-bench.yaw_jitter..=bench.yaw_jitter)
    } else {
        0.0
    };
    let p = sc.start.position + sc.start.y_axis() * lateral;
    sc.start = Pose2::new(p, sc.start.yaw + yaw);
    sc
}

/// One seeded trial; returns the result and its trajectory log.
pub fn run_trial(cfg: &Config, kind: ScenarioKind, method: Method, seed: u64) -> Result<(TrialResult, Vec<TrajectoryRecord>)> {
    let sc = trial_scenario(kind, &cfg.bench, seed);
    let t0 = Instant::now();
    let (success, reason, log, decisions, plan_time) = match method {
        Method::Heuristic | Method::Idle => {
            let mut env = CarryEnv::from_scenario(cfg.env_config(), &sc, seed)?;
            let (out, log) = match method {
                Method::Heuristic => run_episode(&mut env, &mut HeuristicTracker::new(cfg.tracker.clone()), None)?,
                _ => run_episode(&mut env, &mut ZeroController, None)?,
            };
            (out.success(), out.reason.name().to_string(), log, out.steps, None)
        }
        Method::Prm { mode, n_samples } => {
            let prm = PrmConfig {
                mode,
                n_samples,
                ..cfg.prm.clone()
            };
            let start = SystemConfiguration::new(sc.start, [0.0, 0.0]);
            let out = run_prm(&sc.terrain, &start, &sc.waypoints, &prm, &cfg.system, cfg.commands.reach_radius, seed)?;
            let n = out.plan_times.len();
            let total: f64 = out.plan_times.iter().sum();
            (out.success(), out.end.name().to_string(), out.records, n, Some(total))
        }
    };
    let elapsed = plan_time.unwrap_or_else(|| t0.elapsed().as_secs_f64());
    let lengths = path_lengths(&log);
    Ok((
        TrialResult {
            scenario: kind.name().to_string(),
            method: method.to_string(),
            seed,
            success,
            reason,
            l_agent1: lengths.agent1,
            l_agent2: lengths.agent2,
            l_obj: lengths.object,
            latency: if decisions > 0 { elapsed / decisions as f64 } else { 0.0 },
        },
        log,
    ))
}

/// `n_trials` trials with seeds `seed0, seed0 + 1, …`, run in parallel and
/// returned in seed order.
pub fn run_trials(cfg: &Config, kind: ScenarioKind, method: Method, n_trials: usize, seed0: u64) -> Result<Vec<TrialResult>> {
    (0..n_trials as u64)
        .into_par_iter()
        .map(|i| run_trial(cfg, kind, method, seed0.wrapping_add(i)).map(|(r, _)| r))
        .collect()
}

/// Mean and sample standard deviation; `(NaN, NaN)` when empty.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub method: String,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub l_agent1: (f64, f64),
    pub l_agent2: (f64, f64),
    pub l_obj: (f64, f64),
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<ReportRow>,
}

/// Groups trials by (scenario, method) in first-appearance order. Length
/// statistics use successful trials only.
pub fn aggregate(trials: &[TrialResult]) -> BenchReport {
    let mut keys: Vec<(String, String)> = Vec::new();
    for t in trials {
        let k = (t.scenario.clone(), t.method.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let rows = keys
        .into_iter()
        .map(|(scenario, method)| {
            let group: Vec<&TrialResult> = trials
                .iter()
                .filter(|t| t.scenario == scenario && t.method == method)
                .collect();
            let ok: Vec<&TrialResult> = group.iter().copied().filter(|t| t.success).collect();
            let stat = |f: fn(&TrialResult) -> f64| mean_std(&ok.iter().map(|t| f(t)).collect::<Vec<_>>());
            let latency = group.iter().map(|t| t.latency).sum::<f64>() / group.len() as f64;
            ReportRow {
                trials: group.len(),
                successes: ok.len(),
                success_rate: ok.len() as f64 / group.len() as f64,
                l_agent1: stat(|t| t.l_agent1),
                l_agent2: stat(|t| t.l_agent2),
                l_obj: stat(|t| t.l_obj),
                latency,
                scenario,
                method,
            }
        })
        .collect();
    BenchReport { rows }
}

fn pm((m, s): (f64, f64)) -> String {
    if m.is_nan() {
        "-".to_string()
    } else {
        format!("{m:.2} ± {s:.2}")
    }
}

impl BenchReport {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Aligned text table. Latency is shown only with `timing`, since it
    /// varies between runs.
    pub fn to_table(&self, timing: bool) -> String {
        let mut header = vec!["scenario", "method", "trials", "SR", "L_agent1 [m]", "L_agent2 [m]", "L_obj [m]"];
        if timing {
            header.push("latency [s]");
        }
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut v = vec![
                    r.scenario.clone(),
                    r.method.clone(),
                    r.trials.to_string(),
                    format!("{:.0}%", 100.0 * r.success_rate),
                    pm(r.l_agent1),
                    pm(r.l_agent2),
                    pm(r.l_obj),
                ];
                if timing {
                    v.push(format!("{:.3e}", r.latency));
                }
                v
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| {
                rows.iter()
                    .map(|r| r[i].chars().count())
                    .chain([header[i].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let line = |cells: Vec<String>, out: &mut String| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        };
        line(header.iter().map(|s| s.to_string()).collect(), &mut out);
        line(widths.iter().map(|w| "-".repeat(*w)).collect(), &mut out);
        for r in rows {
            line(r, &mut out);
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W, timing: bool) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec![
            "scenario", "method", "trials", "successes", "success_rate", "l_agent1_mean", "l_agent1_std",
            "l_agent2_mean", "l_agent2_std", "l_obj_mean", "l_obj_std",
        ];
        if timing {
            header.push("latency_s");
        }
        wr.write_record(&header)?;
        for r in &self.rows {
            let mut v = vec![
                r.scenario.clone(),
                r.method.clone(),
                r.trials.to_string(),
                r.successes.to_string(),
                format!("{}", r.success_rate),
            ];
            for (m, s) in [r.l_agent1, r.l_agent2, r.l_obj] {
                v.push(format!("{m}"));
                v.push(format!("{s}"));
            }
            if timing {
                v.push(format!("{}", r.latency));
            }
            wr.write_record(v)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Per-trial records; latency is written only with `timing` (0 otherwise).
pub fn write_trials<W: Write>(trials: &[TrialResult], w: W, timing: bool) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for t in trials {
        let mut t = t.clone();
        if !timing {
            t.latency = 0.0;
        }
        wr.serialize(t)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_trials<R: Read>(r: R) -> Result<Vec<TrialResult>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for s in ["heuristic", "idle", "prm-local-100", "prm-full-1500"] {
            assert_eq!(s.parse::<Method>().unwrap().to_string(), s);
        }
        assert!("prm-half-10".parse::<Method>().is_err());
        assert!("rl".parse::<Method>().is_err());
    }

    #[test]
    fn zero_trials_give_empty_report() {
        let r = aggregate(&[]);
        assert!(r.is_empty());
        assert_eq!(r.to_table(false).lines().count(), 2);
    }

    fn trial(success: bool, l: f64) -> TrialResult {
        TrialResult {
            scenario: "empty".into(),
            method: "heuristic".into(),
            seed: 0,
            success,
            reason: if success { "goal" } else { "timeout" }.into(),
            l_agent1: l,
            l_agent2: l,
            l_obj: l,
            latency: 0.0,
        }
    }

    #[test]
    fn statistics_use_successful_trials_only() {
        let r = aggregate(&[trial(true, 8.0), trial(false, 1.0), trial(true, 10.0)]);
        let row = &r.rows[0];
        assert_eq!((row.trials, row.successes), (3, 2));
        assert_eq!(row.l_obj.0, 9.0);
        assert!((row.l_obj.1 - 2f64.sqrt()).abs() < 1e-12);
        let none = aggregate(&[trial(false, 1.0)]);
        assert!(none.rows[0].l_obj.0.is_nan());
        assert!(none.to_table(false).contains(" - "));
    }

    #[test]
    fn trials_csv_round_trip_reproduces_report() {
        let trials = vec![trial(true, 8.123456789), trial(false, 1.0), trial(true, 9.5)];
        let mut buf = Vec::new();
        write_trials(&trials, &mut buf, false).unwrap();
        let back = read_trials(buf.as_slice()).unwrap();
        assert_eq!(back, trials);
        assert_eq!(aggregate(&back).to_table(false), aggregate(&trials).to_table(false));
    }

    #[test]
    fn jitter_is_seeded_and_lateral() {
        let b = BenchConfig::default();
        let a = trial_scenario(ScenarioKind::Empty, &b, 3);
        assert_eq!(a, trial_scenario(ScenarioKind::Empty, &b, 3));
        assert_eq!(a.start.position.x, 0.0);
        assert!(a.start.position.y.abs() <= 0.1);
        assert!(a.start.yaw.abs() <= 0.05);
    }
}
