//! Schedules, return estimators and small numeric helpers shared by the
//! trainers.

use rand::Rng as _;

use super::config::TargetUpdate;
use crate::autodiff::{ParamStore, Tensor};
use crate::rng::Rng;

pub const EPSILON_START: f64 = 1.0;
pub const EPSILON_FINISH: f64 = 0.05;

/// Large negative logit offset that drives a softmax entry to exactly zero.
pub const MASK_LOGIT: f64 = -1e10;

/// Exploration rate at environment step `t`: linear from 1 to 0.05 over
/// `anneal_steps`, constant afterwards.
pub fn epsilon(t: u64, anneal_steps: u64) -> f64 {
    if anneal_steps == 0 || t >= anneal_steps {
        return EPSILON_FINISH;
    }
    let frac = t as f64 / anneal_steps as f64;
    EPSILON_START + frac * (EPSILON_FINISH - EPSILON_START)
}

/// Per-row `target_q[argmax online_q]`: the Double Q-learning evaluation of
/// the next state. Only the first `valid` columns are eligible.
pub fn double_q_values(next_online_q: &Tensor, next_target_q: &Tensor, valid: usize) -> Vec<f64> {
    assert_eq!(next_online_q.shape(), next_target_q.shape(), "online and target shapes differ");
    (0..next_online_q.rows())
        .map(|r| {
            let row = &next_online_q.row_slice(r)[..valid];
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            next_target_q.get(r, best)
        })
        .collect()
}

/// `y = r + gamma * (1 - terminated) * target_q(s', argmax_a online_q(s', a))`.
pub fn q_targets_double(
    rewards: &[f64],
    terminated: &[bool],
    next_online_q: &Tensor,
    next_target_q: &Tensor,
    gamma: f64,
) -> Vec<f64> {
    let next = double_q_values(next_online_q, next_target_q, next_online_q.cols());
    bootstrap_targets(rewards, terminated, &next, gamma)
}

/// `r + gamma * (1 - terminated) * next`.
pub fn bootstrap_targets(rewards: &[f64], terminated: &[bool], next: &[f64], gamma: f64) -> Vec<f64> {
    assert!(rewards.len() == terminated.len() && rewards.len() == next.len());
    rewards
        .iter()
        .zip(terminated)
        .zip(next)
        .map(|((&r, &t), &v)| if t { r } else { r + gamma * v })
        .collect()
}

/// n-step bootstrapped returns over one trajectory segment.
///
/// `values` has one more entry than `rewards`: `values[t]` estimates the
/// state before step `t`, the last entry the state after the segment.
/// `dones[t]` marks a terminal transition, after which nothing is
/// bootstrapped.
pub fn nstep_returns(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, n: usize) -> Vec<f64> {
    assert_eq!(values.len(), rewards.len() + 1, "values needs a trailing bootstrap entry");
    let next_values: Vec<f64> = values[1..].to_vec();
    let truncated = vec![false; rewards.len()];
    nstep_returns_truncated(rewards, &next_values, dones, &truncated, gamma, n)
}

/// n-step returns that distinguish episode ends.
///
/// `next_values[t]` estimates the state reached by step `t` (the final
/// observation when an episode ended there). A `terminated` step ends the
/// sum with no bootstrap; a `truncated` step ends it with a bootstrap from
/// `next_values[t]`. The sum also stops, with a bootstrap, after `n` steps or
/// at the end of the segment.
pub fn nstep_returns_truncated(
    rewards: &[f64],
    next_values: &[f64],
    terminated: &[bool],
    truncated: &[bool],
    gamma: f64,
    n: usize,
) -> Vec<f64> {
    let len = rewards.len();
    assert!(next_values.len() == len && terminated.len() == len && truncated.len() == len);
    assert!(n > 0, "n must be positive");
    (0..len)
        .map(|t| {
            let mut g = 0.0;
            let mut disc = 1.0;
            for k in 0..n {
                let j = t + k;
                g += disc * rewards[j];
                disc *= gamma;
                if terminated[j] {
                    break;
                }
                if truncated[j] || k + 1 == n || j + 1 == len {
                    g += disc * next_values[j];
                    break;
                }
            }
            g
        })
        .collect()
}

/// Running mean and variance with the usual parallel update and a weak
/// prior (variance 1, count 1e-4).
#[derive(Clone, Debug)]
pub struct RunningMeanStd {
    mean: f64,
    var: f64,
    count: f64,
}

impl Default for RunningMeanStd {
    fn default() -> Self {
        Self {
            mean: 0.0,
            var: 1.0,
            count: 1e-4,
        }
    }
}

impl RunningMeanStd {
    pub fn update(&mut self, x: f64) {
        let total = self.count + 1.0;
        let delta = x - self.mean;
        let mean = self.mean + delta / total;
        let m2 = self.var * self.count + delta * delta * self.count / total;
        self.mean = mean;
        self.var = m2 / total;
        self.count = total;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.var.max(0.0).sqrt()
    }
}

/// Divides rewards by a running standard deviation of discounted returns.
/// One discounted-return accumulator is kept per parallel stream.
#[derive(Clone, Debug)]
pub struct RewardStandardiser {
    enabled: bool,
    gamma: f64,
    returns: Vec<f64>,
    stats: RunningMeanStd,
}

impl RewardStandardiser {
    pub fn new(enabled: bool, gamma: f64, streams: usize) -> Self {
        Self {
            enabled,
            gamma,
            returns: vec![0.0; streams],
            stats: RunningMeanStd::default(),
        }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    /// Feed one raw reward of `stream`; `done` closes its episode.
    pub fn observe(&mut self, stream: usize, reward: f64, done: bool) {
        if !self.enabled {
            return;
        }
        let ret = &mut self.returns[stream];
        *ret = *ret * self.gamma + reward;
        self.stats.update(*ret);
        if done {
            *ret = 0.0;
        }
    }

    pub fn divisor(&self) -> f64 {
        if self.enabled {
            self.stats.std().max(1e-6)
        } else {
            1.0
        }
    }

    pub fn scale(&self, reward: f64) -> f64 {
        reward / self.divisor()
    }

    /// Scale a whole stream, updating the estimate as it goes.
    pub fn standardise_stream(&mut self, rewards: &[f64], dones: &[bool]) -> Vec<f64> {
        rewards
            .iter()
            .zip(dones)
            .map(|(&r, &d)| {
                self.observe(0, r, d);
                self.scale(r)
            })
            .collect()
    }
}

/// `obs` zero-padded to `max_len` with a one-hot identity of `agent` appended.
pub fn share_parameters(obs: &[f32], agent_index: usize, n_agents: usize, max_len: usize) -> Vec<f64> {
    assert!(agent_index < n_agents, "agent {agent_index} out of {n_agents}");
    assert!(obs.len() <= max_len, "observation longer than the padded length");
    let mut out = Vec::with_capacity(max_len + n_agents);
    out.extend(obs.iter().map(|&x| x as f64));
    out.resize(max_len, 0.0);
    out.extend((0..n_agents).map(|i| if i == agent_index { 1.0 } else { 0.0 }));
    out
}

/// Row vector adding [`MASK_LOGIT`] to the columns at or beyond `valid`.
pub fn logit_mask(valid: usize, width: usize) -> Tensor {
    Tensor::row(&(0..width).map(|i| if i < valid { 0.0 } else { MASK_LOGIT }).collect::<Vec<_>>())
}

/// Row-wise softmax of plain values.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Shannon entropy in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Index drawn from a categorical distribution.
pub fn sample_categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `Q(chosen) - sum_a pi(a) Q(a)`.
pub fn coma_advantage(q_values: &[f64], policy: &[f64], chosen: usize) -> f64 {
    assert_eq!(q_values.len(), policy.len());
    let baseline: f64 = q_values.iter().zip(policy).map(|(q, p)| q * p).sum();
    q_values[chosen] - baseline
}

/// Clipped surrogate term `min(r A, clip(r, 1-eps, 1+eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

/// Keeps a target network in step with its online network.
#[derive(Clone, Debug)]
pub struct TargetSync {
    mode: TargetUpdate,
    updates: u64,
}

impl TargetSync {
    pub fn new(mode: TargetUpdate) -> Self {
        Self { mode, updates: 0 }
    }

    pub fn mode(&self) -> TargetUpdate {
        self.mode
    }

    /// Call once after every optimisation step.
    pub fn after_update(&mut self, online: &ParamStore, target: &mut ParamStore) {
        self.updates += 1;
        target_update(online, target, self.mode, self.updates);
    }
}

/// Apply the target rule for update number `step` (counted from 1).
pub fn target_update(online: &ParamStore, target: &mut ParamStore, mode: TargetUpdate, step: u64) {
    match mode {
        TargetUpdate::Hard(interval) => {
            if step % interval == 0 {
                target.copy_from(online);
            }
        }
        TargetUpdate::Soft(tau) => target.soft_update_from(online, tau),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn epsilon_schedule_endpoints() {
        assert_eq!(epsilon(0, 50_000), 1.0);
        assert!((epsilon(50_000, 50_000) - 0.05).abs() < 1e-12);
        assert!((epsilon(25_000, 50_000) - 0.525).abs() < 1e-12);
        assert_eq!(epsilon(1_000_000, 50_000), 0.05);
    }

    #[test]
    fn double_q_toy_mdp() {
        // Two next states, two actions. Online picks action 1 then 0.
        let online = Tensor::new(2, 2, vec![0.1, 0.9, 0.7, 0.2]);
        let target = Tensor::new(2, 2, vec![5.0, 3.0, 4.0, 8.0]);
        let y = q_targets_double(&[1.0, 0.0], &[false, false], &online, &target, 0.5);
        assert_eq!(y, vec![1.0 + 0.5 * 3.0, 0.5 * 4.0]);
        let y = q_targets_double(&[1.0, 2.0], &[true, false], &online, &target, 0.0);
        assert_eq!(y, vec![1.0, 2.0]);
    }

    #[test]
    fn nstep_simple_cases() {
        let r = [1.0, 2.0, 3.0];
        let v = [0.0, 10.0, 20.0, 30.0];
        let g = nstep_returns(&r, &v, &[false; 3], 0.9, 1);
        assert_eq!(g, vec![1.0 + 9.0, 2.0 + 18.0, 3.0 + 27.0]);
        let ones = [1.0; 10];
        let g = nstep_returns(&ones, &[0.0; 11], &[false; 10], 1.0, 5);
        assert_eq!(g[0], 5.0);
    }

    #[test]
    fn truncation_bootstraps_from_final_state() {
        let g = nstep_returns_truncated(&[1.0, 1.0], &[100.0, 50.0], &[false, false], &[true, false], 0.5, 5);
        assert_eq!(g, vec![1.0 + 0.5 * 100.0, 1.0 + 0.5 * 50.0]);
        let g = nstep_returns_truncated(&[1.0, 1.0], &[100.0, 50.0], &[true, false], &[false, false], 0.5, 5);
        assert_eq!(g[0], 1.0);
    }

    #[test]
    fn zero_rewards_pass_through_standardiser() {
        let mut s = RewardStandardiser::new(true, 0.99, 1);
        let out = s.standardise_stream(&[0.0; 100], &[false; 100]);
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn disabled_standardiser_is_identity() {
        let mut s = RewardStandardiser::new(false, 0.99, 1);
        let r = [1.0, -3.0, 7.5];
        assert_eq!(s.standardise_stream(&r, &[false; 3]), r.to_vec());
    }

    #[test]
    fn standardised_stream_is_scale_invariant() {
        let mut rng = rng_from_seed(9);
        let raw: Vec<f64> = (0..20_000).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let dones: Vec<bool> = (0..raw.len()).map(|i| i % 25 == 24).collect();
        let base = RewardStandardiser::new(true, 0.99, 1).standardise_stream(&raw, &dones);
        let scaled: Vec<f64> = raw.iter().map(|r| r * 37.0).collect();
        let other = RewardStandardiser::new(true, 0.99, 1).standardise_stream(&scaled, &dones);
        for (a, b) in base.iter().zip(&other).skip(1000) {
            if a.abs() > 1e-3 {
                assert!((b / a - 1.0).abs() < 0.05);
            }
        }
    }

    #[test]
    fn share_parameters_pads_and_appends_identity() {
        assert_eq!(share_parameters(&[0.5], 0, 3, 1), vec![0.5, 1.0, 0.0, 0.0]);
        let a = share_parameters(&[1.0; 10], 1, 2, 12);
        let b = share_parameters(&[1.0; 12], 0, 2, 12);
        assert_eq!(a.len(), 14);
        assert_eq!(b.len(), 14);
        assert_eq!(&a[10..], &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn masked_policy_has_exact_support() {
        let logits = [0.3, -1.0, 2.0, 0.0, 5.0, 1.0];
        let mask = logit_mask(4, 6);
        let masked: Vec<f64> = logits.iter().zip(mask.data()).map(|(l, m)| l + m).collect();
        let p = softmax(&masked);
        assert_eq!(p.iter().filter(|&&x| x > 0.0).count(), 4);
        assert_eq!(p[4], 0.0);
        assert_eq!(p[5], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coma_advantage_examples() {
        assert!((coma_advantage(&[1.0, 2.0, 3.0], &[0.2, 0.3, 0.5], 2) - 0.7).abs() < 1e-12);
        for a in 0..3 {
            assert_eq!(coma_advantage(&[4.0; 3], &[0.1, 0.6, 0.3], a), 0.0);
        }
    }

    #[test]
    fn surrogate_clips_large_ratios() {
        assert_eq!(clipped_surrogate(2.0, 1.0, 0.2), 1.2);
        assert_eq!(clipped_surrogate(1.0, -3.0, 0.2), -3.0);
    }

    #[test]
    fn uniform_entropy_is_log_n() {
        assert!((entropy(&[0.2; 5]) - 5f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn hard_target_copies_on_interval() {
        let mut online = ParamStore::new();
        online.add(Tensor::scalar(1.0));
        let mut target = ParamStore::new();
        target.add(Tensor::scalar(0.0));
        let mut sync = TargetSync::new(TargetUpdate::Hard(200));
        for _ in 0..199 {
            sync.after_update(&online, &mut target);
        }
        assert_eq!(target.flat(), vec![0.0]);
        sync.after_update(&online, &mut target);
        assert_eq!(target.flat(), vec![1.0]);
    }

    #[test]
    fn categorical_sampling_frequencies() {
        let mut rng = rng_from_seed(4);
        let p = [0.1, 0.0, 0.6, 0.3];
        let mut counts = [0usize; 4];
        for _ in 0..20_000 {
            counts[sample_categorical(&p, &mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        for (c, q) in counts.iter().zip(p) {
            assert!((*c as f64 / 20_000.0 - q).abs() < 0.015);
        }
    }
}
