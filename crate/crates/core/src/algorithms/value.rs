//! IQL, VDN and QMIX: epsilon-greedy agents trained from episode replay
//! with Double Q-learning targets.

use rand::Rng as _;

use super::agents::AgentNets;
use super::common::{bootstrap_targets, double_q_values, epsilon, RewardStandardiser, TargetSync};
use super::config::{Algorithm, TrainerConfig};
use super::qmix::QmixMixer;
use super::replay::{Episode, ReplayBuffer};
use super::{TrainError, TrainStats, Trainer};
use crate::autodiff::gradcheck::{check_gradients, GradCheckReport, DEFAULT_STEP};
use crate::autodiff::{clip_grad_norm, Adam, AdamConfig, ParamStore, Tape, Tensor, Var};
use crate::env::{JointAction, JointObservation, MultiAgentEnv};
use crate::rng::{derive_seed, rng_from_seed, Rng};

#[derive(Clone, Debug)]
enum Mixer {
    Independent,
    Sum,
    Monotonic(QmixMixer),
}

/// Inputs and fixed regression targets of one update.
struct ValueBatch {
    inputs: Vec<Tensor>,
    actions: Vec<Vec<usize>>,
    states: Tensor,
    /// One column per agent for independent learners, a single column otherwise.
    targets: Vec<Tensor>,
}

pub struct ValueTrainer {
    cfg: TrainerConfig,
    env: Box<dyn MultiAgentEnv>,
    env_seed: u64,
    obs: JointObservation,
    episode: Episode,
    episodes: u64,
    agents: AgentNets,
    mixer: Mixer,
    online: ParamStore,
    target: ParamStore,
    adam: Adam,
    sync: TargetSync,
    buffer: ReplayBuffer,
    standardiser: RewardStandardiser,
    rng: Rng,
    env_steps: u64,
    updates: u64,
    last_loss: Option<f64>,
}

/// Epsilon-greedy joint action over masked agent outputs.
pub(crate) fn epsilon_greedy(
    agents: &AgentNets,
    store: &ParamStore,
    obs: &JointObservation,
    eps: f64,
    rng: &mut Rng,
) -> JointAction {
    let q = agents.infer_joint(store, obs);
    q.iter()
        .enumerate()
        .map(|(i, qi)| {
            let valid = agents.action_size(i);
            if rng.gen::<f64>() < eps {
                rng.gen_range(0..valid)
            } else {
                super::common::argmax(&qi[..valid])
            }
        })
        .collect()
}

fn state_tensor(states: &[&[f32]]) -> Tensor {
    let rows: Vec<Vec<f64>> = states.iter().map(|s| s.iter().map(|&x| x as f64).collect()).collect();
    Tensor::from_rows(&rows)
}

impl ValueTrainer {
    pub fn new(cfg: TrainerConfig, mut env: Box<dyn MultiAgentEnv>, seed: u64) -> Result<Self, TrainError> {
        cfg.validate()?;
        assert!(cfg.algorithm.is_value_based(), "{} is not value-based", cfg.algorithm);
        let mut init = rng_from_seed(derive_seed(seed, 1));
        let obs_dims = env.observation_space().dims().to_vec();
        let sizes = env.action_space().sizes().to_vec();
        let width = env.action_space().max_size();
        let mut online = ParamStore::new();
        let agents = AgentNets::new(
            &mut online,
            &obs_dims,
            &sizes,
            width,
            true,
            cfg.hidden_dim,
            cfg.parameter_sharing,
            &mut init,
        );
        let mixer = match cfg.algorithm {
            Algorithm::Iql => Mixer::Independent,
            Algorithm::Vdn => Mixer::Sum,
            _ => Mixer::Monotonic(QmixMixer::new(
                &mut online,
                obs_dims.len(),
                obs_dims.iter().sum(),
                cfg.mixer_embed,
                &mut init,
            )),
        };
        let target = online.clone();
        let env_seed = derive_seed(seed, 3);
        let obs = env.reset(derive_seed(env_seed, 0))?;
        Ok(Self {
            adam: Adam::new(&online, AdamConfig::with_lr(cfg.lr)),
            sync: TargetSync::new(cfg.target_update),
            buffer: ReplayBuffer::new(cfg.buffer_episodes, cfg.buffer_transitions),
            standardiser: RewardStandardiser::new(cfg.reward_standardisation, cfg.gamma, 1),
            rng: rng_from_seed(derive_seed(seed, 2)),
            episode: Episode::new(&obs),
            obs,
            env,
            env_seed,
            episodes: 0,
            agents,
            mixer,
            online,
            target,
            cfg,
            env_steps: 0,
            updates: 0,
            last_loss: None,
        })
    }

    pub fn agents(&self) -> &AgentNets {
        &self.agents
    }

    pub fn online(&self) -> &ParamStore {
        &self.online
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Greedy per-agent values for one joint observation.
    pub fn q_values(&self, obs: &JointObservation) -> Vec<Vec<f64>> {
        self.agents.infer_joint(&self.online, obs)
    }

    fn n_agents(&self) -> usize {
        self.agents.n_agents()
    }

    /// Joint value of per-agent values `qs` (`B x N`) in `states`, with its
    /// gradient with respect to `qs`, through the same mixing path as
    /// training. `None` for independent learners.
    pub fn mix_values(&self, qs: &Tensor, states: &Tensor) -> Option<(Vec<f64>, Tensor)> {
        let mut tape = Tape::new();
        let q = tape.leaf(qs.clone());
        let s = tape.constant(states.clone());
        let total = match &self.mixer {
            Mixer::Independent => return None,
            Mixer::Sum => tape.sum_cols(q),
            Mixer::Monotonic(mixer) => mixer.mix(&mut tape, &self.online, q, s),
        };
        let values = tape.value(total).data().to_vec();
        let sum = tape.sum(total);
        tape.backward(sum).expect("scalar");
        Some((values, tape.grad(q).cloned().unwrap_or_else(|| Tensor::zeros(qs.rows(), qs.cols()))))
    }

    fn make_batch(
        &self,
        states: &[&[f32]],
        actions: Vec<Vec<usize>>,
        rewards: &[f64],
        next_states: &[&[f32]],
        terminated: &[bool],
    ) -> ValueBatch {
        let n = self.n_agents();
        let inputs: Vec<Tensor> = (0..n).map(|i| self.agents.inputs_from_states(i, states)).collect();
        let next_values: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let x = self.agents.inputs_from_states(i, next_states);
                let online = self.agents.infer(&self.online, i, &x);
                let target = self.agents.infer(&self.target, i, &x);
                double_q_values(&online, &target, self.agents.action_size(i))
            })
            .collect();
        let gamma = self.cfg.gamma;
        let targets = match &self.mixer {
            Mixer::Independent => next_values
                .iter()
                .map(|v| Tensor::column(&bootstrap_targets(rewards, terminated, v, gamma)))
                .collect(),
            Mixer::Sum => {
                let total: Vec<f64> = (0..rewards.len()).map(|b| next_values.iter().map(|v| v[b]).sum()).collect();
                vec![Tensor::column(&bootstrap_targets(rewards, terminated, &total, gamma))]
            }
            Mixer::Monotonic(mixer) => {
                let qs = Tensor::new(
                    rewards.len(),
                    n,
                    (0..rewards.len()).flat_map(|b| next_values.iter().map(move |v| v[b])).collect(),
                );
                let next = mixer.infer(&self.target, &qs, &state_tensor(next_states));
                vec![Tensor::column(&bootstrap_targets(rewards, terminated, &next, gamma))]
            }
        };
        ValueBatch {
            inputs,
            actions,
            states: state_tensor(states),
            targets,
        }
    }

    fn loss(&self, tape: &mut Tape, store: &ParamStore, batch: &ValueBatch) -> Var {
        let chosen: Vec<Var> = (0..self.n_agents())
            .map(|i| {
                let x = tape.constant(batch.inputs[i].clone());
                let q = self.agents.forward(tape, store, i, x);
                tape.gather(q, &batch.actions[i])
            })
            .collect();
        match &self.mixer {
            Mixer::Independent => {
                let mut total: Option<Var> = None;
                for (i, &c) in chosen.iter().enumerate() {
                    let y = tape.constant(batch.targets[i].clone());
                    let l = tape.mse(c, y);
                    total = Some(match total {
                        Some(t) => tape.add(t, l),
                        None => l,
                    });
                }
                total.unwrap()
            }
            Mixer::Sum => {
                let qs = tape.concat_cols(&chosen);
                let q_tot = tape.sum_cols(qs);
                let y = tape.constant(batch.targets[0].clone());
                tape.mse(q_tot, y)
            }
            Mixer::Monotonic(mixer) => {
                let qs = tape.concat_cols(&chosen);
                let s = tape.constant(batch.states.clone());
                let q_tot = mixer.mix(tape, store, qs, s);
                let y = tape.constant(batch.targets[0].clone());
                tape.mse(q_tot, y)
            }
        }
    }

    fn update(&mut self) -> f64 {
        let scale = 1.0 / self.standardiser.divisor();
        let n = self.n_agents();
        let sampled = self.buffer.sample_episodes(self.cfg.batch_size, &mut self.rng);
        let states: Vec<&[f32]> = sampled.iter().map(|t| t.state).collect();
        let next_states: Vec<&[f32]> = sampled.iter().map(|t| t.next_state).collect();
        let actions: Vec<Vec<usize>> = (0..n).map(|i| sampled.iter().map(|t| t.actions[i]).collect()).collect();
        let rewards: Vec<f64> = sampled.iter().map(|t| t.reward * scale).collect();
        let terminated: Vec<bool> = sampled.iter().map(|t| t.terminated).collect();
        let batch = self.make_batch(&states, actions, &rewards, &next_states, &terminated);
        let mut tape = Tape::new();
        let loss = self.loss(&mut tape, &self.online, &batch);
        tape.backward(loss).expect("scalar loss");
        let value = tape.value(loss).item();
        self.online.accumulate_grads(&tape);
        clip_grad_norm(&mut self.online, self.cfg.grad_clip);
        self.adam.step(&mut self.online);
        self.sync.after_update(&self.online, &mut self.target);
        self.updates += 1;
        value
    }
}

impl Trainer for ValueTrainer {
    fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    fn env_steps(&self) -> u64 {
        self.env_steps
    }

    fn train_until(&mut self, env_steps: u64) -> Result<TrainStats, TrainError> {
        while self.env_steps < env_steps {
            let eps = epsilon(self.env_steps, self.cfg.epsilon_anneal);
            let actions = epsilon_greedy(&self.agents, &self.online, &self.obs, eps, &mut self.rng);
            let result = self.env.step(&actions)?;
            let reward = self.env.team_reward(&result.rewards);
            let done = result.all_done();
            self.standardiser.observe(0, reward, done);
            self.episode.push(&actions, reward, &result.next_obs, result.terminated());
            self.env_steps += 1;
            if done {
                self.episodes += 1;
                self.obs = self.env.reset(derive_seed(self.env_seed, self.episodes))?;
                let finished = std::mem::replace(&mut self.episode, Episode::new(&self.obs));
                self.buffer.push(finished);
                if self.buffer.n_transitions() >= self.cfg.warmup {
                    self.last_loss = Some(self.update());
                }
            } else {
                self.obs = result.next_obs;
            }
        }
        Ok(TrainStats {
            env_steps: self.env_steps,
            updates: self.updates,
            episodes: self.episodes,
            last_loss: self.last_loss,
        })
    }

    fn act(&self, obs: &JointObservation, rng: &mut Rng) -> JointAction {
        epsilon_greedy(&self.agents, &self.online, obs, self.cfg.eval_epsilon, rng)
    }

    fn gradient_check(&self, seed: u64) -> GradCheckReport {
        let mut rng = rng_from_seed(seed);
        let dims: Vec<usize> = self.env.observation_space().dims().to_vec();
        let width: usize = dims.iter().sum();
        let b = 6;
        let mut draw = || -> Vec<Vec<f32>> {
            (0..b).map(|_| (0..width).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).collect()
        };
        let states = draw();
        let next = draw();
        let st: Vec<&[f32]> = states.iter().map(Vec::as_slice).collect();
        let nx: Vec<&[f32]> = next.iter().map(Vec::as_slice).collect();
        let actions: Vec<Vec<usize>> = (0..self.n_agents())
            .map(|i| (0..b).map(|_| rng.gen_range(0..self.agents.action_size(i))).collect())
            .collect();
        let rewards: Vec<f64> = (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let terminated: Vec<bool> = (0..b).map(|k| k % 3 == 0).collect();
        let batch = self.make_batch(&st, actions, &rewards, &nx, &terminated);
        let mut store = self.online.clone();
        check_gradients(&mut store, DEFAULT_STEP, |tape, s| self.loss(tape, s, &batch))
    }

    fn parameters(&self) -> Vec<&ParamStore> {
        vec![&self.online, &self.target]
    }

    fn parameters_mut(&mut self) -> Vec<&mut ParamStore> {
        vec![&mut self.online, &mut self.target]
    }
}
