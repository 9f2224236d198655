use std::ffi::{CStr, CString};
use std::ptr;

use carrybar_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(cb_last_error()) }.to_string_lossy().into_owned()
}

fn new_env(kind: CbScenario, seed: u64) -> *mut CbEnv {
    let mut env = ptr::null_mut();
    let s = unsafe { cb_env_new(kind as u32, false, seed, ptr::null(), &mut env) };
    assert_eq!(s, CbStatus::Ok, "{}", last_error());
    env
}

fn obs_len(env: *const CbEnv) -> usize {
    let mut n = 0;
    assert_eq!(unsafe { cb_env_observation_len(env, &mut n) }, CbStatus::Ok);
    n
}

#[test]
fn reset_step_matches_library() {
    let env = new_env(CbScenario::Corridor, 4);
    let n = obs_len(env);
    let mut obs = vec![0.0; n];
    assert_eq!(unsafe { cb_env_reset(env, obs.as_mut_ptr(), n) }, CbStatus::Ok);

    let cfg = carrybar::config::Config::default();
    let sc = carrybar::terrain::scenario(carrybar::terrain::ScenarioKind::Corridor, false);
    let mut direct = carrybar::env::CarryEnv::from_scenario(cfg.env_config(), &sc, 4).unwrap();
    assert_eq!(direct.reset().unwrap().to_vec(), obs);

    let action = [0.4, 0.0, 0.1, 0.4, 0.0, 0.1];
    let mut reward = f64::NAN;
    let mut term = CbTermination::Goal;
    for _ in 0..5 {
        let s = unsafe { cb_env_step(env, action.as_ptr(), obs.as_mut_ptr(), n, &mut reward, &mut term) };
        assert_eq!(s, CbStatus::Ok, "{}", last_error());
        let r = direct.step(&action).unwrap();
        assert_eq!(r.observation.to_vec(), obs);
        assert_eq!(r.reward.total, reward);
        assert_eq!(term, CbTermination::Running);
    }
    let mut pose = [0.0; 3];
    assert_eq!(unsafe { cb_env_object_pose(env, pose.as_mut_ptr()) }, CbStatus::Ok);
    let p = direct.state().unwrap().object_pose;
    assert_eq!(pose, [p.position.x, p.position.y, p.yaw]);
    unsafe { cb_env_free(env) };
}

#[test]
fn episode_runs_to_a_termination() {
    let env = new_env(CbScenario::Empty, 0);
    let n = obs_len(env);
    let mut obs = vec![0.0; n];
    unsafe { cb_env_reset(env, obs.as_mut_ptr(), n) };
    let idle = [0.0; 6];
    let mut term = CbTermination::Running;
    let mut steps = 0;
    while term == CbTermination::Running {
        let s = unsafe { cb_env_step(env, idle.as_ptr(), obs.as_mut_ptr(), n, ptr::null_mut(), &mut term) };
        assert_eq!(s, CbStatus::Ok);
        steps += 1;
    }
    assert_eq!(term, CbTermination::Timeout);
    assert_eq!(steps, 1400);
    let s = unsafe { cb_env_step(env, idle.as_ptr(), obs.as_mut_ptr(), n, ptr::null_mut(), &mut term) };
    assert_eq!(s, CbStatus::InvalidState);
    assert!(last_error().contains("reset"));
    unsafe { cb_env_free(env) };
}

#[test]
fn errors_are_reported_with_codes() {
    let env = new_env(CbScenario::Boxes, 1);
    let n = obs_len(env);
    let mut obs = vec![0.0; n];
    let action = [0.0; 6];
    let s = unsafe { cb_env_step(env, action.as_ptr(), obs.as_mut_ptr(), n, ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(s, CbStatus::InvalidState);
    let mut short = vec![0.0; n - 1];
    assert_eq!(unsafe { cb_env_reset(env, short.as_mut_ptr(), n - 1) }, CbStatus::BufferSize);
    assert!(last_error().contains(&n.to_string()));
    assert_eq!(unsafe { cb_env_reset(ptr::null_mut(), obs.as_mut_ptr(), n) }, CbStatus::NullPointer);
    unsafe { cb_env_free(env) };

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { cb_env_new(7, false, 0, ptr::null(), &mut out) }, CbStatus::InvalidArgument);
    assert!(out.is_null());
    let bad = CString::new("[system]\nbar_length = -1.0\n").unwrap();
    assert_eq!(unsafe { cb_env_new(0, false, 0, bad.as_ptr(), &mut out) }, CbStatus::Config);
    let unknown = CString::new("[nonsense]\n").unwrap();
    assert_eq!(unsafe { cb_env_new(0, false, 0, unknown.as_ptr(), &mut out) }, CbStatus::Config);
    assert!(out.is_null());
    unsafe { cb_env_free(ptr::null_mut()) };
}

#[test]
fn custom_config_changes_the_observation_size() {
    let toml = CString::new("[perception]\nmap_height = 3.0\n").unwrap();
    let mut env = ptr::null_mut();
    assert_eq!(unsafe { cb_env_new(0, false, 0, toml.as_ptr(), &mut env) }, CbStatus::Ok);
    let default = new_env(CbScenario::Empty, 0);
    assert!(obs_len(env) < obs_len(default));
    unsafe {
        cb_env_free(env);
        cb_env_free(default);
    }
}

#[test]
fn terrain_queries() {
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { cb_terrain_scenario(CbScenario::Corridor as u32, false, &mut t) }, CbStatus::Ok);
    let mut n = 0;
    unsafe { cb_terrain_n_obstacles(t, &mut n) };
    assert_eq!(n, 2);
    let mut h = -1.0;
    assert_eq!(unsafe { cb_terrain_height_at(t, 0.0, 0.0, 0.0, &mut h) }, CbStatus::Ok);
    assert_eq!(h, 0.0);
    assert_eq!(unsafe { cb_terrain_height_at(t, 1e3, 0.0, 0.0, &mut h) }, CbStatus::OutOfBounds);
    unsafe { cb_terrain_free(t) };

    let mut a = ptr::null_mut();
    let mut b = ptr::null_mut();
    unsafe {
        assert_eq!(cb_terrain_generate(9, ptr::null(), &mut a), CbStatus::Ok);
        assert_eq!(cb_terrain_generate(9, ptr::null(), &mut b), CbStatus::Ok);
        let (mut na, mut nb) = (0, 0);
        cb_terrain_n_obstacles(a, &mut na);
        cb_terrain_n_obstacles(b, &mut nb);
        assert_eq!(na, nb);
        assert!(na > 0);
        for k in 0..200 {
            let (x, y) = (0.05 + 2.99 * k as f64, 0.37 * (k % 32) as f64 + 0.05);
            let (mut ha, mut hb) = (0.0, 0.0);
            assert_eq!(cb_terrain_height_at(a, x, y, 0.0, &mut ha), CbStatus::Ok);
            cb_terrain_height_at(b, x, y, 0.0, &mut hb);
            assert_eq!(ha, hb);
        }
        cb_terrain_free(a);
        cb_terrain_free(b);
    }
}

#[test]
fn bound_action_squashes_and_zeroes_nan() {
    let raw = [2.0, -2.0, f64::NAN, 0.3, -0.8, 0.81];
    let mut out = [0.0; 6];
    assert_eq!(unsafe { cb_bound_action(raw.as_ptr(), 0.8, out.as_mut_ptr()) }, CbStatus::Ok);
    for (o, r) in out.iter().zip(raw) {
        let expected = if r.is_nan() { 0.0 } else { 0.8 * (r / 0.8).tanh() };
        assert!((o - expected).abs() < 1e-15);
        assert!(o.abs() <= 0.8);
    }
    assert_eq!(unsafe { cb_bound_action(raw.as_ptr(), f64::NAN, out.as_mut_ptr()) }, CbStatus::InvalidArgument);
    let v = unsafe { CStr::from_ptr(cb_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
