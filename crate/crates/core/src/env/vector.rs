//! Synchronous vectorized stepping over independent environment instances.

use rayon::prelude::*;

use super::{EnvError, JointAction, JointObservation, MultiAgentEnv, StepResult};
use crate::rng::derive_seed;

/// A batch of independent environments stepped in lockstep.
///
/// Finished episodes are reset automatically; the seed of episode `k` in
/// worker `i` is derived from `(base_seed, i, k)` only, so traces do not
/// depend on how stepping is scheduled across threads.
pub struct VecEnv<E> {
    envs: Vec<E>,
    obs: Vec<JointObservation>,
    base_seed: u64,
    episodes: Vec<u64>,
    parallel: bool,
}

impl<E: MultiAgentEnv> VecEnv<E> {
    pub fn new(envs: Vec<E>, base_seed: u64) -> Self {
        let n = envs.len();
        Self {
            envs,
            obs: vec![JointObservation::default(); n],
            base_seed,
            episodes: vec![0; n],
            parallel: false,
        }
    }

    /// Step workers on the rayon pool instead of the calling thread.
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[E] {
        &self.envs
    }

    /// Seed used for episode `episode` of worker `index`.
    pub fn episode_seed(base_seed: u64, index: usize, episode: u64) -> u64 {
        derive_seed(derive_seed(base_seed, index as u64), episode)
    }

    pub fn reset(&mut self) -> Result<&[JointObservation], EnvError> {
        for (i, env) in self.envs.iter_mut().enumerate() {
            self.episodes[i] = 0;
            let seed = Self::episode_seed(self.base_seed, i, 0);
            self.obs[i] = env
                .reset(seed)
                .map_err(|e| EnvError::Worker {
                    index: i,
                    source: Box::new(e),
                })?;
        }
        Ok(&self.obs)
    }

    pub fn observations(&self) -> &[JointObservation] {
        &self.obs
    }

    /// Steps every worker once. A result's `next_obs` is the observation that
    /// ended the transition; when the episode finished, the worker's current
    /// observation is replaced by the first observation of the next episode.
    pub fn step(&mut self, actions: &[JointAction]) -> Result<Vec<StepResult>, EnvError> {
        assert_eq!(actions.len(), self.envs.len(), "one joint action per worker");
        let base = self.base_seed;
        let work = |(i, ((env, act), (obs, episode))): (
            usize,
            ((&mut E, &JointAction), (&mut JointObservation, &mut u64)),
        )| {
            let wrap = |e: EnvError| EnvError::Worker {
                index: i,
                source: Box::new(e),
            };
            let result = env.step(act).map_err(wrap)?;
            if result.all_done() {
                *episode += 1;
                *obs = env
                    .reset(Self::episode_seed(base, i, *episode))
                    .map_err(wrap)?;
            } else {
                *obs = result.next_obs.clone();
            }
            Ok(result)
        };
        let items = self
            .envs
            .iter_mut()
            .zip(actions)
            .zip(self.obs.iter_mut().zip(self.episodes.iter_mut()))
            .enumerate();
        if self.parallel {
            let collected: Vec<Result<StepResult, EnvError>> =
                items.collect::<Vec<_>>().into_par_iter().map(work).collect();
            collected.into_iter().collect()
        } else {
            items.map(work).collect()
        }
    }
}

/// Runs `steps` synchronous ticks. `policy(i, obs)` is queried in worker
/// order before each tick; the returned streams are indexed by worker.
pub fn run_vectorized<E, P>(
    venv: &mut VecEnv<E>,
    mut policy: P,
    steps: usize,
) -> Result<Vec<Vec<StepResult>>, EnvError>
where
    E: MultiAgentEnv,
    P: FnMut(usize, &JointObservation) -> JointAction,
{
    let mut streams: Vec<Vec<StepResult>> = vec![Vec::with_capacity(steps); venv.len()];
    for _ in 0..steps {
        let actions: Vec<JointAction> = venv
            .observations()
            .iter()
            .enumerate()
            .map(|(i, o)| policy(i, o))
            .collect();
        for (stream, r) in streams.iter_mut().zip(venv.step(&actions)?) {
            stream.push(r);
        }
    }
    Ok(streams)
}
