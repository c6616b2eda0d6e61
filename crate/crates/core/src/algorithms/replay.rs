//! Episode replay with a capacity in both episodes and transitions.

use std::collections::VecDeque;

use rand::Rng as _;

use crate::env::JointObservation;
use crate::rng::Rng;

/// One complete episode stored column-wise. Observations are kept once:
/// the next observation of step `t` is the observation of step `t + 1`, so
/// an episode of `T` steps holds `T + 1` joint observations.
#[derive(Clone, Debug, Default)]
pub struct Episode {
    obs: Vec<f32>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    terminated: bool,
    obs_width: usize,
    n_agents: usize,
}

impl Episode {
    pub fn new(first: &JointObservation) -> Self {
        let mut e = Self {
            n_agents: first.n_agents(),
            obs_width: first.per_agent.iter().map(Vec::len).sum(),
            ..Self::default()
        };
        e.push_obs(first);
        e
    }

    fn push_obs(&mut self, obs: &JointObservation) {
        for o in &obs.per_agent {
            self.obs.extend_from_slice(o);
        }
    }

    /// Append one step. `terminated` marks a true terminal state.
    pub fn push(&mut self, actions: &[usize], reward: f64, next_obs: &JointObservation, terminated: bool) {
        assert_eq!(actions.len(), self.n_agents, "one action per agent");
        assert!(!self.terminated, "episode already terminated");
        self.actions.extend_from_slice(actions);
        self.rewards.push(reward);
        self.push_obs(next_obs);
        self.terminated = terminated;
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Concatenated joint observation before step `t` (`t == len()` gives
    /// the final observation).
    pub fn state(&self, t: usize) -> &[f32] {
        &self.obs[t * self.obs_width..(t + 1) * self.obs_width]
    }

    pub fn actions(&self, t: usize) -> &[usize] {
        &self.actions[t * self.n_agents..(t + 1) * self.n_agents]
    }

    pub fn reward(&self, t: usize) -> f64 {
        self.rewards[t]
    }

    /// Whether step `t` entered a terminal state.
    pub fn terminal_at(&self, t: usize) -> bool {
        self.terminated && t + 1 == self.len()
    }

    pub fn transition(&self, t: usize) -> Transition<'_> {
        Transition {
            state: self.state(t),
            actions: self.actions(t),
            reward: self.reward(t),
            next_state: self.state(t + 1),
            terminated: self.terminal_at(t),
        }
    }
}

/// View of one stored step. `state` is the concatenation of every agent's
/// observation; `reward` is the team reward.
#[derive(Clone, Copy, Debug)]
pub struct Transition<'a> {
    pub state: &'a [f32],
    pub actions: &'a [usize],
    pub reward: f64,
    pub next_state: &'a [f32],
    pub terminated: bool,
}

/// Oldest-first ring of episodes.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    episodes: VecDeque<Episode>,
    max_episodes: usize,
    max_transitions: usize,
    transitions: usize,
}

impl ReplayBuffer {
    pub fn new(max_episodes: usize, max_transitions: usize) -> Self {
        assert!(max_episodes > 0 && max_transitions > 0, "capacity must be positive");
        Self {
            episodes: VecDeque::new(),
            max_episodes,
            max_transitions,
            transitions: 0,
        }
    }

    pub fn n_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn n_transitions(&self) -> usize {
        self.transitions
    }

    pub fn is_empty(&self) -> bool {
        self.transitions == 0
    }

    /// Store a finished episode, evicting the oldest ones beyond capacity.
    pub fn push(&mut self, episode: Episode) {
        if episode.is_empty() {
            return;
        }
        self.transitions += episode.len();
        self.episodes.push_back(episode);
        while self.episodes.len() > self.max_episodes
            || (self.transitions > self.max_transitions && self.episodes.len() > 1)
        {
            let old = self.episodes.pop_front().unwrap();
            self.transitions -= old.len();
        }
    }

    /// `batch` (episode, step) pairs: an episode uniformly, then a step of it
    /// uniformly.
    pub fn sample_indices(&self, batch: usize, rng: &mut Rng) -> Vec<(usize, usize)> {
        assert!(!self.is_empty(), "sampling from an empty buffer");
        (0..batch)
            .map(|_| {
                let e = rng.gen_range(0..self.episodes.len());
                let t = rng.gen_range(0..self.episodes[e].len());
                (e, t)
            })
            .collect()
    }

    pub fn episode(&self, index: usize) -> &Episode {
        &self.episodes[index]
    }

    /// Every transition of `batch` distinct episodes drawn uniformly, or of
    /// all stored episodes when fewer are held.
    pub fn sample_episodes(&self, batch: usize, rng: &mut Rng) -> Vec<Transition<'_>> {
        assert!(!self.is_empty(), "sampling from an empty buffer");
        let picked = rand::seq::index::sample(rng, self.episodes.len(), batch.min(self.episodes.len()));
        picked
            .into_iter()
            .flat_map(|e| {
                let ep = &self.episodes[e];
                (0..ep.len()).map(move |t| ep.transition(t))
            })
            .collect()
    }

    pub fn sample(&self, batch: usize, rng: &mut Rng) -> Vec<Transition<'_>> {
        self.sample_indices(batch, rng)
            .into_iter()
            .map(|(e, t)| self.episodes[e].transition(t))
            .collect()
    }
}
