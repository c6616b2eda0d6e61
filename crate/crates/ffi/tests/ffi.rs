use std::ffi::{CStr, CString};
use std::ptr;

use marlbench::rng::rng_from_seed;
use marlbench::TaskSpec;
use marlbench_ffi::*;
use rand::Rng as _;

struct Handle(*mut MarlEnv);

impl Handle {
    fn make(name: &str) -> Result<Self, MarlStatus> {
        let name = CString::new(name).unwrap();
        let mut env = ptr::null_mut();
        match unsafe { marl_env_make(name.as_ptr(), &mut env) } {
            MarlStatus::Ok => Ok(Self(env)),
            s => {
                assert!(env.is_null());
                Err(s)
            }
        }
    }

    fn query(&self, f: unsafe extern "C" fn(*const MarlEnv, *mut usize) -> MarlStatus) -> usize {
        let mut out = 0;
        assert_eq!(unsafe { f(self.0, &mut out) }, MarlStatus::Ok);
        out
    }

    fn per_agent(&self, f: unsafe extern "C" fn(*const MarlEnv, usize, *mut usize) -> MarlStatus, agent: usize) -> Result<usize, MarlStatus> {
        let mut out = 0;
        match unsafe { f(self.0, agent, &mut out) } {
            MarlStatus::Ok => Ok(out),
            s => Err(s),
        }
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f32>, MarlStatus> {
        let mut obs = vec![0.0f32; self.query(marl_env_obs_len)];
        match unsafe { marl_env_reset(self.0, seed, obs.as_mut_ptr(), obs.len()) } {
            MarlStatus::Ok => Ok(obs),
            s => Err(s),
        }
    }

    fn step(&mut self, actions: &[u32]) -> Result<(Vec<f32>, Vec<f64>, Vec<bool>, bool), MarlStatus> {
        let n = self.query(marl_env_n_agents);
        let mut obs = vec![0.0f32; self.query(marl_env_obs_len)];
        let mut rewards = vec![0.0; n];
        let mut dones = vec![false; n];
        let mut truncated = false;
        let s = unsafe {
            marl_env_step(
                self.0,
                actions.as_ptr(),
                actions.len(),
                obs.as_mut_ptr(),
                obs.len(),
                rewards.as_mut_ptr(),
                dones.as_mut_ptr(),
                &mut truncated,
            )
        };
        match s {
            MarlStatus::Ok => Ok((obs, rewards, dones, truncated)),
            s => Err(s),
        }
    }
}

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { marl_env_free(self.0) }
    }
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(marl_last_error()) }.to_str().unwrap().to_string()
}

#[test]
fn version_matches_core() {
    let v = unsafe { CStr::from_ptr(marl_version()) }.to_str().unwrap();
    assert_eq!(v, marlbench::VERSION);
}

#[test]
fn make_reports_spaces() {
    let env = Handle::make("rware-tiny-2ag-v1").unwrap();
    assert_eq!(env.query(marl_env_n_agents), 2);
    for a in 0..2 {
        assert_eq!(env.per_agent(marl_env_action_size, a), Ok(4));
        assert_eq!(env.per_agent(marl_env_agent_obs_len, a), Ok(71));
    }
    assert_eq!(env.query(marl_env_obs_len), 142);
    assert_eq!(env.per_agent(marl_env_action_size, 2), Err(MarlStatus::InvalidArgument));

    let lbf = Handle::make("Foraging-8x8-2p-3f-v1").unwrap();
    assert_eq!(lbf.per_agent(marl_env_agent_obs_len, 0), Ok(15));
}

#[test]
fn unknown_names_are_rejected() {
    for name in ["bogus-v1", "rware-giant-1ag-v1"] {
        assert_eq!(Handle::make(name).err(), Some(MarlStatus::UnknownTask));
        assert!(last_error().contains("unknown environment"));
    }
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { marl_env_make(ptr::null(), &mut out) }, MarlStatus::NullPointer);
    let bad = [0xffu8, 0];
    assert_eq!(
        unsafe { marl_env_make(bad.as_ptr().cast(), &mut out) },
        MarlStatus::InvalidUtf8
    );
}

#[test]
fn step_errors_map_to_codes() {
    let mut env = Handle::make("climbing").unwrap();
    assert_eq!(env.step(&[0, 0]).err(), Some(MarlStatus::NotReset));
    env.reset(0).unwrap();
    assert_eq!(env.step(&[0]).err(), Some(MarlStatus::InvalidAction));
    assert_eq!(env.step(&[0, 3]).err(), Some(MarlStatus::InvalidAction));
    assert!(last_error().contains("outside"));
    let mut short = [0.0f32; 1];
    assert_eq!(
        unsafe { marl_env_reset(env.0, 0, short.as_mut_ptr(), short.len()) },
        MarlStatus::BufferTooSmall
    );
    env.reset(0).unwrap();
    let mut last = None;
    for _ in 0..25 {
        last = Some(env.step(&[2, 0]).unwrap());
    }
    let (_, rewards, dones, truncated) = last.unwrap();
    assert_eq!(rewards, vec![11.0, 11.0]);
    assert_eq!(dones, vec![true, true]);
    assert!(truncated);
    assert_eq!(env.step(&[0, 0]).err(), Some(MarlStatus::EpisodeFinished));
}

#[test]
fn null_handles_are_safe() {
    unsafe { marl_env_free(ptr::null_mut()) };
    let mut n = 0;
    assert_eq!(unsafe { marl_env_n_agents(ptr::null(), &mut n) }, MarlStatus::NullPointer);
}

/// The single-episode loop of the reference usage: reset, then random
/// actions until every agent is done.
#[test]
fn random_episode_runs_to_completion() {
    let mut env = Handle::make("rware-tiny-2ag-v1").unwrap();
    let obs = env.reset(0).unwrap();
    assert_eq!(obs.len(), 142);
    let mut rng = rng_from_seed(1);
    let (_, _, dones, _) = env.step(&[rng.gen_range(0..4), rng.gen_range(0..4)]).unwrap();
    assert_eq!(dones, vec![false, false]);
    let mut steps = 1;
    loop {
        let (_, _, dones, _) = env.step(&[rng.gen_range(0..4), rng.gen_range(0..4)]).unwrap();
        steps += 1;
        if dones.iter().all(|&d| d) {
            break;
        }
    }
    assert_eq!(steps, 500);
}

#[test]
fn matches_native_trace_bit_for_bit() {
    for name in ["rware-tiny-2ag-v1", "Foraging-8x8-2p-2f-coop-v1", "penalty-k-25"] {
        let task: TaskSpec = name.parse().unwrap();
        let mut native = task.build().unwrap();
        let mut bound = Handle::make(name).unwrap();
        let sizes = native.action_space().sizes().to_vec();
        let mut rng = rng_from_seed(7);
        let mut episode = 0;
        let mut a = native.reset(7).unwrap().concat();
        let mut b = bound.reset(7).unwrap();
        assert_eq!(a, b);
        for _ in 0..1000 {
            let acts: Vec<usize> = sizes.iter().map(|&s| rng.gen_range(0..s)).collect();
            let acts32: Vec<u32> = acts.iter().map(|&x| x as u32).collect();
            let n = native.step(&acts).unwrap();
            let (obs, rewards, dones, truncated) = bound.step(&acts32).unwrap();
            assert_eq!(n.next_obs.concat().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                       obs.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            assert_eq!(n.rewards.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                       rewards.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            assert_eq!(n.dones, dones);
            assert_eq!(n.truncated(), truncated);
            if n.all_done() {
                episode += 1;
                a = native.reset(7 + episode).unwrap().concat();
                b = bound.reset(7 + episode).unwrap();
                assert_eq!(a, b);
            }
        }
    }
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/marlbench.h")).unwrap();
    for symbol in [
        "typedef struct MarlEnv MarlEnv",
        "marl_version",
        "marl_last_error",
        "marl_env_make",
        "marl_env_reset",
        "marl_env_step",
        "marl_env_free",
        "MARL_STATUS_OK = 0",
    ] {
        assert!(header.contains(symbol), "{symbol}");
    }
}
