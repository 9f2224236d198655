use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn carrybar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carrybar")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn failures_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let out = out.to_str().unwrap();

    let o = carrybar(&["rollout", "--scenario", "swamp", "--out", out]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("swamp"));

    let o = carrybar(&["rollout", "--method", "prm-sideways-3", "--out", out]);
    assert!(!o.status.success());

    let o = carrybar(&["--config", "/nonexistent/cfg.toml", "default-config"]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error:"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[rewards]\nw10 = 1.0\n").unwrap();
    let o = carrybar(&["--config", bad.to_str().unwrap(), "default-config"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("w10"), "{}", stderr(&o));

    let o = carrybar(&["export-traj", "--log", "/nonexistent.csv", "--out", out]);
    assert!(!o.status.success());
}

#[test]
fn default_config_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    let o = carrybar(&["default-config", "--out", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&cfg).unwrap();
    assert!(text.contains("[rewards]") && text.contains("w3 = -7.5"));
    let again = dir.path().join("again.toml");
    let o = carrybar(&["--config", cfg.to_str().unwrap(), "default-config", "--out", again.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(text, std::fs::read_to_string(again).unwrap());
}

#[test]
fn zero_trial_bench_writes_an_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rep");
    let o = carrybar(&["bench", "--scenario", "empty", "--method", "heuristic", "--trials", "0", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn rollout_log_exports_frame_paths() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.csv");
    let paths = dir.path().join("paths.csv");
    let o = carrybar(&["rollout", "--scenario", "corridor", "--method", "prm-full-100", "--seed", "2", "--out", log.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("corridor prm-full-100 seed 2"));
    let o = carrybar(&["export-traj", "--log", log.to_str().unwrap(), "--out", paths.to_str().unwrap()]);
    assert!(o.status.success());
    let records = carrybar::trajectory::load_csv(&log).unwrap();
    let text = std::fs::read_to_string(paths).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "time,obj_x,obj_y,a1_x,a1_y,a2_x,a2_y");
    assert_eq!(lines.count(), records.len());
}

#[test]
fn serve_speaks_json_lines() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_carrybar"))
        .arg("serve")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let requests = [
        r#"{"cmd":"step","action":[0,0,0,0,0,0]}"#,
        r#"{"cmd":"reset","scenario":"corridor","seed":1}"#,
        r#"{"cmd":"step","action":[0.5,0,0,0.5,0,0]}"#,
        r#"{"cmd":"step","action":[0.5,0]}"#,
        r#"not json"#,
        r#"{"cmd":"close"}"#,
    ];
    {
        let mut stdin = child.stdin.take().unwrap();
        for r in requests {
            writeln!(stdin, "{r}").unwrap();
        }
    }
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let replies: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(replies.len(), 5);
    assert!(replies[0]["error"].as_str().unwrap().contains("reset"));
    let n = replies[1]["observation"].as_array().unwrap().len();
    assert_eq!(n, 19 + 13 * 20);
    assert_eq!(replies[2]["observation"].as_array().unwrap().len(), n);
    assert!(replies[2]["reward"].is_f64());
    assert!(replies[2]["terminated"].is_null());
    assert!(replies[2]["terms"]["internal_forces"].is_f64());
    assert!(replies[3]["error"].is_string());
    assert!(replies[4]["error"].is_string());
}
