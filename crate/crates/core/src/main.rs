use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use carrybar::bench::{aggregate, run_trial, run_trials, write_trials, Method};
use carrybar::config::Config;
use carrybar::env::CarryEnv;
use carrybar::terrain::{generate, scenario, ScenarioKind, Terrain};
use carrybar::trajectory::{load_csv, save_csv, write_frame_paths};
use carrybar::waypoints::{sample_graph, save_paths, shortest_paths};
use carrybar::Result;

#[derive(Parser)]
#[command(name = "carrybar", version, about = "Two-agent bar carrying: terrain, simulation and benchmarks")]
struct Cli {
    /// TOML configuration; defaults are used for missing sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the default configuration as TOML.
    DefaultConfig {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the curriculum terrain and write it as JSON.
    GenTerrain {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample waypoint paths over a terrain file.
    SamplePaths {
        #[arg(long)]
        terrain: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one episode and write its trajectory log as CSV.
    Rollout {
        #[arg(long, default_value = "empty")]
        scenario: ScenarioKind,
        #[arg(long, default_value = "heuristic")]
        method: Method,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run seeded trials and write the report.
    Bench {
        /// Scenario names; all three when omitted.
        #[arg(long, value_delimiter = ',')]
        scenario: Vec<ScenarioKind>,
        /// Methods such as `heuristic`, `prm-local-100`, `prm-full-1500`.
        #[arg(long, value_delimiter = ',', default_value = "heuristic,prm-local-100,prm-local-1500,prm-full-1500")]
        method: Vec<Method>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Include per-decision latency (not reproducible across runs).
        #[arg(long)]
        timing: bool,
        /// Output directory for report.txt, report.csv and trials.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a trajectory log into per-frame planar paths.
    ExportTraj {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// JSON-lines environment server on stdin/stdout.
    Serve,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::DefaultConfig { out } => write_text(out.as_deref(), &Config::default().to_toml()),
        Cmd::GenTerrain { seed, out } => {
            if let Some(s) = seed {
                cfg.terrain.rng_seed = s;
            }
            let terrain = generate(&cfg.terrain)?;
            terrain.save(&out)?;
            log::info!("{} obstacles in {} subterrains", terrain.n_obstacles(), terrain.subterrains.len());
            Ok(())
        }
        Cmd::SamplePaths { terrain, seed, out } => {
            let terrain = Terrain::load(terrain)?;
            let c = &cfg.commands;
            let g = sample_graph(&terrain, c.n_points, c.clearance, c.connection_radius, seed)?;
            let paths = shortest_paths(&g, &terrain, c.l_min, c.l_max, c.n_paths, seed);
            save_paths(&paths, &out)?;
            log::info!("{} nodes, {} edges, {} paths", g.len(), g.n_edges(), paths.len());
            Ok(())
        }
        Cmd::Rollout { scenario, method, seed, out } => {
            let (result, log) = run_trial(&cfg, scenario, method, seed)?;
            save_csv(&log, &out)?;
            println!(
                "{} {} seed {}: {} (L_obj {:.3} m, {} records)",
                result.scenario,
                result.method,
                result.seed,
                result.reason,
                result.l_obj,
                log.len()
            );
            Ok(())
        }
        Cmd::Bench { scenario, method, trials, seed, timing, out } => {
            let kinds = if scenario.is_empty() { ScenarioKind::ALL.to_vec() } else { scenario };
            let n = trials.unwrap_or(cfg.bench.trials);
            let seed0 = seed.unwrap_or(cfg.bench.seed);
            let mut all = Vec::new();
            for &kind in &kinds {
                for &m in &method {
                    all.extend(run_trials(&cfg, kind, m, n, seed0)?);
                }
            }
            let report = aggregate(&all);
            let table = report.to_table(timing);
            print!("{table}");
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("report.txt"), &table)?;
                report.write_csv(fs::File::create(dir.join("report.csv"))?, timing)?;
                write_trials(&all, fs::File::create(dir.join("trials.csv"))?, timing)?;
            }
            Ok(())
        }
        Cmd::ExportTraj { log, out } => {
            let records = load_csv(log)?;
            write_frame_paths(&records, fs::File::create(out)?)
        }
        Cmd::Serve => serve(&cfg, io::stdin().lock(), io::stdout().lock()),
    }
}

#[derive(Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
enum Request {
    Reset {
        #[serde(default)]
        scenario: Option<ScenarioKind>,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        dynamic: bool,
    },
    Step {
        action: [f64; 6],
    },
    Close,
}

/// One request per line; each gets exactly one JSON reply line. Errors are
/// reported as `{"error": ...}` and the session continues.
fn serve(cfg: &Config, input: impl BufRead, mut output: impl Write) -> Result<()> {
    let mut env: Option<CarryEnv> = None;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Err(e) => json!({ "error": format!("bad request: {e}") }),
            Ok(Request::Close) => break,
            Ok(Request::Reset { scenario: kind, seed, dynamic }) => {
                let sc = scenario(kind.unwrap_or(ScenarioKind::Empty), dynamic);
                match CarryEnv::from_scenario(cfg.env_config(), &sc, seed).and_then(|mut e| {
                    let obs = e.reset()?;
                    env = Some(e);
                    Ok(obs)
                }) {
                    Ok(obs) => json!({ "observation": obs.to_vec(), "rows": obs.rows, "cols": obs.cols }),
                    Err(e) => json!({ "error": e.to_string() }),
                }
            }
            Ok(Request::Step { action }) => match env.as_mut().map(|e| e.step(&action)) {
                None => json!({ "error": "step before reset" }),
                Some(Err(e)) => json!({ "error": e.to_string() }),
                Some(Ok(r)) => json!({
                    "observation": r.observation.to_vec(),
                    "reward": r.reward.total,
                    "terms": r.reward,
                    "terminated": r.terminated.map(|t| t.name()),
                }),
            },
        };
        writeln!(output, "{reply}")?;
        output.flush()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
