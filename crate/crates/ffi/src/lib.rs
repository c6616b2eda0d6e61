//! C ABI over the marlbench environments.
//!
//! Every function returns a [`MarlStatus`]. On failure a description of the
//! most recent error on the calling thread is available from
//! [`marl_last_error`]. Observations are written as the concatenation of
//! every agent's observation vector.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use marlbench::{EnvError, MultiAgentEnv, TaskSpec};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    UnknownTask = 3,
    InvalidAction = 4,
    BufferTooSmall = 5,
    NotReset = 6,
    EpisodeFinished = 7,
    InvalidArgument = 8,
    Panic = 9,
}

/// Opaque environment handle.
pub struct MarlEnv {
    inner: Box<dyn MultiAgentEnv>,
    obs_len: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: MarlStatus, msg: impl Into<String>) -> MarlStatus {
    set_error(msg);
    status
}

fn env_status(e: &EnvError) -> MarlStatus {
    let status = match e {
        EnvError::ActionCount { .. } | EnvError::ActionOutOfRange { .. } => MarlStatus::InvalidAction,
        EnvError::EpisodeFinished => MarlStatus::EpisodeFinished,
        EnvError::NotReset => MarlStatus::NotReset,
        EnvError::Worker { source, .. } => return env_status(source),
        EnvError::Config(_) | EnvError::Spawn(_) => MarlStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> MarlStatus) -> MarlStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(MarlStatus::Panic, "internal panic"))
}

static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
    Ok(v) => v,
    Err(_) => panic!("version string"),
};

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn marl_version() -> *const c_char {
    VERSION.as_ptr()
}

/// Message of the last failed call on this thread. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn marl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Create the environment registered under `name`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn marl_env_make(name: *const c_char, out: *mut *mut MarlEnv) -> MarlStatus {
    guard(|| {
        if name.is_null() || out.is_null() {
            return fail(MarlStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let Ok(name) = CStr::from_ptr(name).to_str() else {
            return fail(MarlStatus::InvalidUtf8, "task name is not UTF-8");
        };
        let task: TaskSpec = match name.parse() {
            Ok(t) => t,
            Err(e) => return fail(MarlStatus::UnknownTask, format!("unknown environment `{name}`: {e}")),
        };
        let inner = match task.build() {
            Ok(env) => env,
            Err(e) => return env_status(&e),
        };
        let obs_len = inner.observation_space().dims().iter().sum();
        *out = Box::into_raw(Box::new(MarlEnv { inner, obs_len }));
        MarlStatus::Ok
    })
}

/// Release an environment. Null is ignored.
///
/// # Safety
/// `env` must come from [`marl_env_make`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn marl_env_free(env: *mut MarlEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Number of agents.
///
/// # Safety
/// `env` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn marl_env_n_agents(env: *const MarlEnv, out: *mut usize) -> MarlStatus {
    guard(|| match (env.as_ref(), out.is_null()) {
        (Some(e), false) => {
            *out = e.inner.n_agents();
            MarlStatus::Ok
        }
        _ => fail(MarlStatus::NullPointer, "null argument"),
    })
}

/// Length of the concatenated joint observation.
///
/// # Safety
/// `env` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn marl_env_obs_len(env: *const MarlEnv, out: *mut usize) -> MarlStatus {
    guard(|| match (env.as_ref(), out.is_null()) {
        (Some(e), false) => {
            *out = e.obs_len;
            MarlStatus::Ok
        }
        _ => fail(MarlStatus::NullPointer, "null argument"),
    })
}

/// Observation length of one agent.
///
/// # Safety
/// `env` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn marl_env_agent_obs_len(env: *const MarlEnv, agent: usize, out: *mut usize) -> MarlStatus {
    guard(|| match (env.as_ref(), out.is_null()) {
        (Some(e), false) => match e.inner.observation_space().dims().get(agent) {
            Some(&d) => {
                *out = d;
                MarlStatus::Ok
            }
            None => fail(MarlStatus::InvalidArgument, format!("no agent {agent}")),
        },
        _ => fail(MarlStatus::NullPointer, "null argument"),
    })
}

/// Number of discrete actions of one agent.
///
/// # Safety
/// `env` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn marl_env_action_size(env: *const MarlEnv, agent: usize, out: *mut usize) -> MarlStatus {
    guard(|| match (env.as_ref(), out.is_null()) {
        (Some(e), false) => match e.inner.action_space().sizes().get(agent) {
            Some(&d) => {
                *out = d;
                MarlStatus::Ok
            }
            None => fail(MarlStatus::InvalidArgument, format!("no agent {agent}")),
        },
        _ => fail(MarlStatus::NullPointer, "null argument"),
    })
}

unsafe fn write_obs(env: &MarlEnv, obs: &marlbench::JointObservation, out: *mut f32, len: usize) -> MarlStatus {
    if len < env.obs_len {
        return fail(
            MarlStatus::BufferTooSmall,
            format!("observation buffer holds {len}, need {}", env.obs_len),
        );
    }
    let dst = std::slice::from_raw_parts_mut(out, env.obs_len);
    let mut k = 0;
    for part in &obs.per_agent {
        dst[k..k + part.len()].copy_from_slice(part);
        k += part.len();
    }
    MarlStatus::Ok
}

/// Start an episode and write the joint observation to `obs_out`, which
/// holds `obs_len` floats.
///
/// # Safety
/// `env` must be a live handle; `obs_out` must point to `obs_len` floats.
#[no_mangle]
pub unsafe extern "C" fn marl_env_reset(env: *mut MarlEnv, seed: u64, obs_out: *mut f32, obs_len: usize) -> MarlStatus {
    guard(|| {
        let (Some(env), false) = (env.as_mut(), obs_out.is_null()) else {
            return fail(MarlStatus::NullPointer, "null argument");
        };
        if obs_len < env.obs_len {
            return write_obs(env, &marlbench::JointObservation::new(Vec::new()), obs_out, obs_len);
        }
        match env.inner.reset(seed) {
            Ok(obs) => write_obs(env, &obs, obs_out, obs_len),
            Err(e) => env_status(&e),
        }
    })
}

/// Advance one step with one action per agent.
///
/// Writes the next joint observation, each agent's reward and done flag,
/// and whether the episode ended on the time limit. `truncated_out` may be
/// null.
///
/// # Safety
/// `env` must be a live handle; `actions` must point to `n_agents` values,
/// `rewards_out` and `dones_out` to `n_agents` elements and `obs_out` to
/// `obs_len` floats.
#[no_mangle]
pub unsafe extern "C" fn marl_env_step(
    env: *mut MarlEnv,
    actions: *const u32,
    n_agents: usize,
    obs_out: *mut f32,
    obs_len: usize,
    rewards_out: *mut f64,
    dones_out: *mut bool,
    truncated_out: *mut bool,
) -> MarlStatus {
    guard(|| {
        let Some(env) = env.as_mut() else {
            return fail(MarlStatus::NullPointer, "null handle");
        };
        if actions.is_null() || obs_out.is_null() || rewards_out.is_null() || dones_out.is_null() {
            return fail(MarlStatus::NullPointer, "null buffer");
        }
        let expected = env.inner.n_agents();
        if n_agents != expected {
            return fail(
                MarlStatus::InvalidAction,
                format!("expected {expected} actions, got {n_agents}"),
            );
        }
        if obs_len < env.obs_len {
            return write_obs(env, &marlbench::JointObservation::new(Vec::new()), obs_out, obs_len);
        }
        let acts: Vec<usize> = std::slice::from_raw_parts(actions, n_agents)
            .iter()
            .map(|&a| a as usize)
            .collect();
        let result = match env.inner.step(&acts) {
            Ok(r) => r,
            Err(e) => return env_status(&e),
        };
        let status = write_obs(env, &result.next_obs, obs_out, obs_len);
        if status != MarlStatus::Ok {
            return status;
        }
        std::slice::from_raw_parts_mut(rewards_out, n_agents).copy_from_slice(&result.rewards);
        std::slice::from_raw_parts_mut(dones_out, n_agents).copy_from_slice(&result.dones);
        if let Some(t) = truncated_out.as_mut() {
            *t = result.truncated();
        }
        MarlStatus::Ok
    })
}
