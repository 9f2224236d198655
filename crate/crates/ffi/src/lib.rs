//! C ABI for the carrybar environment and terrain queries.
//!
//! Every fallible call returns a [`CbStatus`]; on failure a description is
//! kept per thread and can be read with [`cb_last_error`]. Handles are opaque
//! and must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use carrybar::config::Config;
use carrybar::env::{bound_action, CarryEnv, Observation};
use carrybar::geometry::Vec2;
use carrybar::sim::TerminationReason;
use carrybar::terrain::{generate, scenario, ScenarioKind, Terrain};
use carrybar::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Output buffer has the wrong length.
    BufferSize = 3,
    Config = 4,
    /// Query outside the terrain bounds.
    OutOfBounds = 5,
    /// `step` before `reset` or after the episode ended.
    InvalidState = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbScenario {
    Empty = 0,
    Corridor = 1,
    Boxes = 2,
}

/// Episode end reported by [`cb_env_step`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbTermination {
    Running = 0,
    Goal = 1,
    Timeout = 2,
    TiltProxy = 3,
    HeightProxy = 4,
}

/// Opaque environment handle.
pub struct CbEnv {
    env: CarryEnv,
}

/// Opaque terrain handle.
pub struct CbTerrain {
    terrain: Terrain,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: CbStatus, msg: &str) -> CbStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> CbStatus {
    let status = match e {
        Error::Config(m) if m.contains("reset") => CbStatus::InvalidState,
        Error::Config(_) | Error::Parse(_) => CbStatus::Config,
        Error::OutOfBounds(_) => CbStatus::OutOfBounds,
        Error::UnknownScenario(_) | Error::Dimension { .. } => CbStatus::InvalidArgument,
        _ => CbStatus::Internal,
    };
    fail(status, &e.to_string())
}

/// Runs `f`, converting panics into [`CbStatus::Internal`].
fn guard(f: impl FnOnce() -> CbStatus) -> CbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(CbStatus::Internal, "internal panic"),
    }
}

unsafe fn read_config(toml: *const c_char) -> Result<Config, CbStatus> {
    if toml.is_null() {
        return Ok(Config::default());
    }
    let s = CStr::from_ptr(toml)
        .to_str()
        .map_err(|_| fail(CbStatus::InvalidArgument, "config is not valid UTF-8"))?;
    Config::from_toml(s).map_err(|e| from_error(&e))
}

fn kind(s: u32) -> Result<ScenarioKind, CbStatus> {
    match s {
        x if x == CbScenario::Empty as u32 => Ok(ScenarioKind::Empty),
        x if x == CbScenario::Corridor as u32 => Ok(ScenarioKind::Corridor),
        x if x == CbScenario::Boxes as u32 => Ok(ScenarioKind::Boxes),
        _ => Err(fail(CbStatus::InvalidArgument, &format!("unknown scenario {s}"))),
    }
}

unsafe fn write_obs(obs: &Observation, out: *mut f64, len: usize) -> CbStatus {
    let v = obs.to_vec();
    if len != v.len() {
        return fail(CbStatus::BufferSize, &format!("observation has {} values, buffer holds {len}", v.len()));
    }
    if out.is_null() {
        return fail(CbStatus::NullPointer, "observation buffer is null");
    }
    ptr::copy_nonoverlapping(v.as_ptr(), out, len);
    CbStatus::Ok
}

/// Message of the last failed call on this thread; empty if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates an environment on a benchmark scenario (a [`CbScenario`] value).
/// `config_toml` may be null for defaults.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cb_env_new(
    scenario_kind: u32,
    dynamic: bool,
    seed: u64,
    config_toml: *const c_char,
    out: *mut *mut CbEnv,
) -> CbStatus {
    guard(|| {
        if out.is_null() {
            return fail(CbStatus::NullPointer, "out is null");
        }
        let cfg = match read_config(config_toml) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let sc = match kind(scenario_kind) {
            Ok(k) => scenario(k, dynamic),
            Err(s) => return s,
        };
        match CarryEnv::from_scenario(cfg.env_config(), &sc, seed) {
            Ok(env) => {
                *out = Box::into_raw(Box::new(CbEnv { env }));
                CbStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `env` must be null or a handle from [`cb_env_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cb_env_free(env: *mut CbEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Number of values in one observation.
///
/// # Safety
/// `env` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cb_env_observation_len(env: *const CbEnv, out: *mut usize) -> CbStatus {
    if env.is_null() || out.is_null() {
        return fail(CbStatus::NullPointer, "null argument");
    }
    *out = (*env).env.observation_len();
    CbStatus::Ok
}

/// Resets the episode and writes the first observation into `obs[0..len]`.
///
/// # Safety
/// `env` must be a live handle; `obs` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cb_env_reset(env: *mut CbEnv, obs: *mut f64, len: usize) -> CbStatus {
    guard(|| {
        if env.is_null() {
            return fail(CbStatus::NullPointer, "env is null");
        }
        match (*env).env.reset() {
            Ok(o) => write_obs(&o, obs, len),
            Err(e) => from_error(&e),
        }
    })
}

/// Advances one control step with a 6-value action (agent1 vx, vy, wz then
/// agent2). Writes the next observation, the total reward and the episode
/// end state. `reward` and `termination` may be null.
///
/// # Safety
/// `env` must be a live handle, `action` must point to 6 doubles and `obs`
/// to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cb_env_step(
    env: *mut CbEnv,
    action: *const f64,
    obs: *mut f64,
    len: usize,
    reward: *mut f64,
    termination: *mut CbTermination,
) -> CbStatus {
    guard(|| {
        if env.is_null() || action.is_null() {
            return fail(CbStatus::NullPointer, "null argument");
        }
        let e = &mut (*env).env;
        if len != e.observation_len() {
            return fail(CbStatus::BufferSize, "observation buffer has the wrong length");
        }
        let a: [f64; 6] = std::array::from_fn(|i| *action.add(i));
        match e.step(&a) {
            Ok(r) => {
                if !reward.is_null() {
                    *reward = r.reward.total;
                }
                if !termination.is_null() {
                    *termination = match r.terminated {
                        None => CbTermination::Running,
                        Some(TerminationReason::Goal) => CbTermination::Goal,
                        Some(TerminationReason::Timeout) => CbTermination::Timeout,
                        Some(TerminationReason::TiltProxy) => CbTermination::TiltProxy,
                        Some(TerminationReason::HeightProxy) => CbTermination::HeightProxy,
                    };
                }
                write_obs(&r.observation, obs, len)
            }
            Err(err) => from_error(&err),
        }
    })
}

/// Object pose `[x, y, yaw]` in the world frame.
///
/// # Safety
/// `env` must be a live handle; `out` must point to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cb_env_object_pose(env: *const CbEnv, out: *mut f64) -> CbStatus {
    if env.is_null() || out.is_null() {
        return fail(CbStatus::NullPointer, "null argument");
    }
    let Some(s) = (*env).env.state() else {
        return fail(CbStatus::InvalidState, "no state before reset");
    };
    let p = s.object_pose;
    for (i, v) in [p.position.x, p.position.y, p.yaw].into_iter().enumerate() {
        *out.add(i) = v;
    }
    CbStatus::Ok
}

/// Maps each of the 6 raw action values through `v_max * tanh(x / v_max)`; NaN
/// becomes 0.
///
/// # Safety
/// `raw` and `out` must each point to 6 doubles; they may alias.
#[no_mangle]
pub unsafe extern "C" fn cb_bound_action(raw: *const f64, v_max: f64, out: *mut f64) -> CbStatus {
    if raw.is_null() || out.is_null() {
        return fail(CbStatus::NullPointer, "null argument");
    }
    if !(v_max > 0.0) {
        return fail(CbStatus::InvalidArgument, "v_max must be positive");
    }
    let a: [f64; 6] = std::array::from_fn(|i| *raw.add(i));
    for (i, v) in bound_action(&a, v_max).into_iter().enumerate() {
        *out.add(i) = v;
    }
    CbStatus::Ok
}

/// Generates the curriculum terrain from the `[terrain]` config section with
/// the given seed.
///
/// # Safety
/// `config_toml` must be null or NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cb_terrain_generate(seed: u64, config_toml: *const c_char, out: *mut *mut CbTerrain) -> CbStatus {
    guard(|| {
        if out.is_null() {
            return fail(CbStatus::NullPointer, "out is null");
        }
        let mut cfg = match read_config(config_toml) {
            Ok(c) => c.terrain,
            Err(s) => return s,
        };
        cfg.rng_seed = seed;
        match generate(&cfg) {
            Ok(terrain) => {
                *out = Box::into_raw(Box::new(CbTerrain { terrain }));
                CbStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Terrain of a benchmark scenario (a [`CbScenario`] value).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cb_terrain_scenario(scenario_kind: u32, dynamic: bool, out: *mut *mut CbTerrain) -> CbStatus {
    if out.is_null() {
        return fail(CbStatus::NullPointer, "out is null");
    }
    let terrain = match kind(scenario_kind) {
        Ok(k) => scenario(k, dynamic).terrain,
        Err(s) => return s,
    };
    *out = Box::into_raw(Box::new(CbTerrain { terrain }));
    CbStatus::Ok
}

/// # Safety
/// `terrain` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cb_terrain_free(terrain: *mut CbTerrain) {
    if !terrain.is_null() {
        drop(Box::from_raw(terrain));
    }
}

/// Ground height at `(x, y)` and time `t`.
///
/// # Safety
/// `terrain` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cb_terrain_height_at(terrain: *const CbTerrain, x: f64, y: f64, t: f64, out: *mut f64) -> CbStatus {
    if terrain.is_null() || out.is_null() {
        return fail(CbStatus::NullPointer, "null argument");
    }
    match (*terrain).terrain.height_at(Vec2::new(x, y), t) {
        Ok(h) => {
            *out = h;
            CbStatus::Ok
        }
        Err(e) => from_error(&e),
    }
}

/// Number of box obstacles.
///
/// # Safety
/// `terrain` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cb_terrain_n_obstacles(terrain: *const CbTerrain, out: *mut usize) -> CbStatus {
    if terrain.is_null() || out.is_null() {
        return fail(CbStatus::NullPointer, "null argument");
    }
    *out = (*terrain).terrain.n_obstacles();
    CbStatus::Ok
}
