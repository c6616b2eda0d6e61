//! MADDPG with discrete actions: Gumbel-softmax actors trained through
//! centralised critics over the state and the joint action.

use rand::Rng as _;

use super::agents::{hidden_widths, AgentNets};
use super::common::{sample_categorical, softmax, RewardStandardiser, TargetSync};
use super::config::{Algorithm, TrainerConfig};
use super::policy::policy_act;
use super::replay::{Episode, ReplayBuffer};
use super::{merge_reports, TrainError, TrainStats, Trainer};
use crate::autodiff::gradcheck::{check_gradients, GradCheckReport, DEFAULT_STEP};
use crate::autodiff::{
    clip_grad_norm, gumbel_softmax, Activation, Adam, AdamConfig, Mlp, ParamStore, Tape, Tensor, Var,
};
use crate::env::{JointAction, JointObservation, MultiAgentEnv};
use crate::rng::{derive_seed, rng_from_seed, Rng};

struct MaddpgBatch {
    states: Tensor,
    actor_inputs: Vec<Tensor>,
    /// One-hot buffer actions per agent, `B x width`.
    one_hots: Vec<Tensor>,
    /// Critic regression targets per agent.
    targets: Vec<Tensor>,
}

pub struct MaddpgTrainer {
    cfg: TrainerConfig,
    env: Box<dyn MultiAgentEnv>,
    env_seed: u64,
    obs: JointObservation,
    episode: Episode,
    episodes: u64,
    actors: AgentNets,
    actor_store: ParamStore,
    actor_target: ParamStore,
    actor_adam: Adam,
    critics: Vec<Mlp>,
    critic_store: ParamStore,
    critic_target: ParamStore,
    critic_adam: Adam,
    actor_sync: TargetSync,
    critic_sync: TargetSync,
    buffer: ReplayBuffer,
    standardiser: RewardStandardiser,
    width: usize,
    rng: Rng,
    env_steps: u64,
    updates: u64,
    last_loss: Option<f64>,
}

fn one_hot_rows(actions: &[usize], width: usize) -> Tensor {
    Tensor::one_hot(actions, width)
}

impl MaddpgTrainer {
    pub fn new(cfg: TrainerConfig, mut env: Box<dyn MultiAgentEnv>, seed: u64) -> Result<Self, TrainError> {
        cfg.validate()?;
        assert_eq!(cfg.algorithm, Algorithm::Maddpg);
        let mut init = rng_from_seed(derive_seed(seed, 1));
        let obs_dims = env.observation_space().dims().to_vec();
        let sizes = env.action_space().sizes().to_vec();
        let width = env.action_space().max_size();
        let n = obs_dims.len();
        let mut actor_store = ParamStore::new();
        let actors = AgentNets::new(
            &mut actor_store,
            &obs_dims,
            &sizes,
            width,
            true,
            cfg.hidden_dim,
            cfg.parameter_sharing,
            &mut init,
        );
        let state_dim: usize = obs_dims.iter().sum();
        let mut critic_store = ParamStore::new();
        let critics = if cfg.parameter_sharing {
            let widths = hidden_widths(state_dim + n * width + n, cfg.hidden_dim, 1);
            vec![Mlp::new(&mut critic_store, &widths, Activation::Relu, &mut init)]
        } else {
            let widths = hidden_widths(state_dim + n * width, cfg.hidden_dim, 1);
            (0..n)
                .map(|_| Mlp::new(&mut critic_store, &widths, Activation::Relu, &mut init))
                .collect()
        };
        let env_seed = derive_seed(seed, 3);
        let obs = env.reset(derive_seed(env_seed, 0))?;
        Ok(Self {
            actor_adam: Adam::new(&actor_store, AdamConfig::with_lr(cfg.lr)),
            critic_adam: Adam::new(&critic_store, AdamConfig::with_lr(cfg.lr)),
            actor_target: actor_store.clone(),
            critic_target: critic_store.clone(),
            actor_sync: TargetSync::new(cfg.target_update),
            critic_sync: TargetSync::new(cfg.target_update),
            buffer: ReplayBuffer::new(cfg.buffer_episodes, cfg.buffer_transitions),
            standardiser: RewardStandardiser::new(cfg.reward_standardisation, cfg.gamma, 1),
            rng: rng_from_seed(derive_seed(seed, 2)),
            episode: Episode::new(&obs),
            obs,
            env,
            env_seed,
            episodes: 0,
            actors,
            actor_store,
            critics,
            critic_store,
            width,
            cfg,
            env_steps: 0,
            updates: 0,
            last_loss: None,
        })
    }

    fn n_agents(&self) -> usize {
        self.actors.n_agents()
    }

    fn critic(&self, agent: usize) -> &Mlp {
        if self.critics.len() == 1 {
            &self.critics[0]
        } else {
            &self.critics[agent]
        }
    }

    fn agent_id(&self, agent: usize, rows: usize) -> Option<Tensor> {
        (self.critics.len() == 1).then(|| Tensor::one_hot(&vec![agent; rows], self.n_agents()))
    }

    /// Critic input of `agent` from per-agent action encodings.
    fn critic_input(&self, agent: usize, states: &Tensor, actions: &[Tensor]) -> Tensor {
        let rows = states.rows();
        let id = self.agent_id(agent, rows);
        let data = (0..rows)
            .flat_map(|r| {
                let mut row = states.row_slice(r).to_vec();
                for a in actions {
                    row.extend_from_slice(a.row_slice(r));
                }
                if let Some(id) = &id {
                    row.extend_from_slice(id.row_slice(r));
                }
                row
            })
            .collect::<Vec<_>>();
        let cols = data.len() / rows.max(1);
        Tensor::new(rows, cols, data)
    }

    /// Critic estimate `Q_i(s, a)` for joint observations and joint actions.
    pub fn critic_value(&self, obs: &[JointObservation], actions: &[JointAction], agent: usize) -> Vec<f64> {
        let rows: Vec<Vec<f64>> =
            obs.iter().map(|o| o.concat().into_iter().map(|x| x as f64).collect()).collect();
        let states = Tensor::from_rows(&rows);
        let one_hots: Vec<Tensor> = (0..self.n_agents())
            .map(|j| one_hot_rows(&actions.iter().map(|a| a[j]).collect::<Vec<_>>(), self.width))
            .collect();
        let x = self.critic_input(agent, &states, &one_hots);
        self.critic(agent).infer(&self.critic_store, &x).into_data()
    }

    /// Action probabilities of each agent.
    pub fn policy(&self, obs: &JointObservation) -> Vec<Vec<f64>> {
        self.actors.infer_joint(&self.actor_store, obs).iter().map(|l| softmax(l)).collect()
    }

    /// Replace every critic with one that outputs `value` regardless of input.
    pub fn set_constant_critic(&mut self, value: f64) {
        let ids: Vec<_> = self.critics.iter().flat_map(|c| c.param_ids()).collect();
        for id in ids {
            self.critic_store.get_mut(id).data_mut().fill(0.0);
        }
        for c in &self.critics {
            let b = c.output_bias();
            self.critic_store.get_mut(b).data_mut().fill(value);
        }
        self.critic_target.copy_from(&self.critic_store);
    }

    fn make_batch(
        &self,
        states: &[&[f32]],
        actions: &[Vec<usize>],
        rewards: &[f64],
        next_states: &[&[f32]],
        terminated: &[bool],
        rng: &mut Rng,
    ) -> MaddpgBatch {
        let n = self.n_agents();
        let to_tensor = |s: &[&[f32]]| {
            let rows: Vec<Vec<f64>> = s.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect();
            Tensor::from_rows(&rows)
        };
        let st = to_tensor(states);
        let nx = to_tensor(next_states);
        let actor_inputs: Vec<Tensor> = (0..n).map(|i| self.actors.inputs_from_states(i, states)).collect();
        let one_hots: Vec<Tensor> = actions.iter().map(|a| one_hot_rows(a, self.width)).collect();
        let tau = self.cfg.gumbel_temperature;
        let next_actions: Vec<Tensor> = (0..n)
            .map(|i| {
                let x = self.actors.inputs_from_states(i, next_states);
                let logits = self.actors.infer(&self.actor_target, i, &x);
                let picks: Vec<usize> = (0..logits.rows())
                    .map(|r| {
                        let scaled: Vec<f64> = logits.row_slice(r).iter().map(|l| l / tau).collect();
                        sample_categorical(&softmax(&scaled), rng)
                    })
                    .collect();
                one_hot_rows(&picks, self.width)
            })
            .collect();
        let targets = (0..n)
            .map(|i| {
                let x = self.critic_input(i, &nx, &next_actions);
                let q = self.critic(i).infer(&self.critic_target, &x);
                let y: Vec<f64> = (0..rewards.len())
                    .map(|b| rewards[b] + if terminated[b] { 0.0 } else { self.cfg.gamma * q.get(b, 0) })
                    .collect();
                Tensor::column(&y)
            })
            .collect();
        MaddpgBatch {
            states: st,
            actor_inputs,
            one_hots,
            targets,
        }
    }

    fn critic_loss(&self, tape: &mut Tape, critic: &ParamStore, batch: &MaddpgBatch) -> Var {
        let terms: Vec<Var> = (0..self.n_agents())
            .map(|i| {
                let x = tape.constant(self.critic_input(i, &batch.states, &batch.one_hots));
                let q = self.critic(i).forward(tape, critic, x);
                let y = tape.constant(batch.targets[i].clone());
                tape.mse(q, y)
            })
            .collect();
        let all = tape.concat_cols(&terms);
        tape.sum(all)
    }

    /// Each agent's action is replaced by a Gumbel sample from its actor
    /// while the other agents keep their buffer actions. Training uses the
    /// straight-through one-hot sample; `hard = false` keeps the relaxed
    /// sample, whose forward value is differentiable.
    fn actor_loss(
        &self,
        tape: &mut Tape,
        actor: &ParamStore,
        critic: &ParamStore,
        batch: &MaddpgBatch,
        hard: bool,
        rng: &mut Rng,
    ) -> Var {
        let n = self.n_agents();
        let rows = batch.states.rows();
        let mut terms = Vec::with_capacity(n);
        for i in 0..n {
            let x = tape.constant(batch.actor_inputs[i].clone());
            let logits = self.actors.forward(tape, actor, i, x);
            let sample = gumbel_softmax(tape, logits, self.cfg.gumbel_temperature, hard, rng)
                .expect("validated temperature");
            let mut parts = vec![tape.constant(batch.states.clone())];
            for j in 0..n {
                parts.push(if j == i { sample } else { tape.constant(batch.one_hots[j].clone()) });
            }
            if let Some(id) = self.agent_id(i, rows) {
                parts.push(tape.constant(id));
            }
            let input = tape.concat_cols(&parts);
            let q = self.critic(i).forward(tape, critic, input);
            let q = tape.mean(q);
            let valid = tape.slice_cols(logits, 0, self.actors.action_size(i));
            let sq = tape.square(valid);
            let reg = tape.mean(sq);
            let reg = tape.scale(reg, self.cfg.actor_reg);
            terms.push(tape.sub(reg, q));
        }
        let all = tape.concat_cols(&terms);
        tape.sum(all)
    }

    /// Gradient of the actor loss with respect to the actor parameters.
    pub fn actor_gradient(&self, seed: u64) -> Vec<f64> {
        let batch = self.synthetic_batch(seed);
        let mut store = self.actor_store.clone();
        let mut tape = Tape::new();
        let mut rng = rng_from_seed(derive_seed(seed, 1));
        let loss = self.actor_loss(&mut tape, &store, &self.critic_store, &batch, true, &mut rng);
        tape.backward(loss).expect("scalar loss");
        store.accumulate_grads(&tape);
        store.flat_grads()
    }

    /// Gradient of the logit regulariser alone.
    pub fn regulariser_gradient(&self, seed: u64) -> Vec<f64> {
        let batch = self.synthetic_batch(seed);
        let mut store = self.actor_store.clone();
        let mut tape = Tape::new();
        let mut terms = Vec::new();
        for i in 0..self.n_agents() {
            let x = tape.constant(batch.actor_inputs[i].clone());
            let logits = self.actors.forward(&mut tape, &store, i, x);
            let valid = tape.slice_cols(logits, 0, self.actors.action_size(i));
            let sq = tape.square(valid);
            let reg = tape.mean(sq);
            terms.push(tape.scale(reg, self.cfg.actor_reg));
        }
        let all = tape.concat_cols(&terms);
        let loss = tape.sum(all);
        tape.backward(loss).expect("scalar loss");
        store.accumulate_grads(&tape);
        store.flat_grads()
    }

    fn update(&mut self) -> f64 {
        let scale = 1.0 / self.standardiser.divisor();
        let n = self.n_agents();
        let mut rng = self.rng.clone();
        let sampled = self.buffer.sample_episodes(self.cfg.batch_size, &mut rng);
        let states: Vec<&[f32]> = sampled.iter().map(|t| t.state).collect();
        let next_states: Vec<&[f32]> = sampled.iter().map(|t| t.next_state).collect();
        let actions: Vec<Vec<usize>> = (0..n).map(|i| sampled.iter().map(|t| t.actions[i]).collect()).collect();
        let rewards: Vec<f64> = sampled.iter().map(|t| t.reward * scale).collect();
        let terminated: Vec<bool> = sampled.iter().map(|t| t.terminated).collect();
        let batch = self.make_batch(&states, &actions, &rewards, &next_states, &terminated, &mut rng);

        let mut tape = Tape::new();
        let loss = self.critic_loss(&mut tape, &self.critic_store, &batch);
        tape.backward(loss).expect("scalar loss");
        let critic_loss = tape.value(loss).item();
        self.critic_store.accumulate_grads(&tape);
        clip_grad_norm(&mut self.critic_store, self.cfg.grad_clip);
        self.critic_adam.step(&mut self.critic_store);

        let mut tape = Tape::new();
        let loss = self.actor_loss(&mut tape, &self.actor_store, &self.critic_store, &batch, true, &mut rng);
        tape.backward(loss).expect("scalar loss");
        self.actor_store.accumulate_grads(&tape);
        clip_grad_norm(&mut self.actor_store, self.cfg.grad_clip);
        self.actor_adam.step(&mut self.actor_store);

        self.critic_sync.after_update(&self.critic_store, &mut self.critic_target);
        self.actor_sync.after_update(&self.actor_store, &mut self.actor_target);
        self.rng = rng;
        self.updates += 1;
        critic_loss
    }

    fn synthetic_batch(&self, seed: u64) -> MaddpgBatch {
        let mut rng = rng_from_seed(seed);
        let width: usize = self.env.observation_space().dims().iter().sum();
        let b = 6;
        let draw = |rng: &mut Rng| -> Vec<Vec<f32>> {
            (0..b).map(|_| (0..width).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).collect()
        };
        let states = draw(&mut rng);
        let next = draw(&mut rng);
        let st: Vec<&[f32]> = states.iter().map(Vec::as_slice).collect();
        let nx: Vec<&[f32]> = next.iter().map(Vec::as_slice).collect();
        let actions: Vec<Vec<usize>> = (0..self.n_agents())
            .map(|i| (0..b).map(|_| rng.gen_range(0..self.actors.action_size(i))).collect())
            .collect();
        let rewards: Vec<f64> = (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let terminated: Vec<bool> = (0..b).map(|k| k % 3 == 0).collect();
        self.make_batch(&st, &actions, &rewards, &nx, &terminated, &mut rng)
    }
}

impl Trainer for MaddpgTrainer {
    fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    fn env_steps(&self) -> u64 {
        self.env_steps
    }

    fn train_until(&mut self, env_steps: u64) -> Result<TrainStats, TrainError> {
        while self.env_steps < env_steps {
            let actions = policy_act(&self.actors, &self.actor_store, &self.obs, &mut self.rng);
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
        policy_act(&self.actors, &self.actor_store, obs, rng)
    }

    fn gradient_check(&self, seed: u64) -> GradCheckReport {
        let batch = self.synthetic_batch(seed);
        let mut critic = self.critic_store.clone();
        let c = check_gradients(&mut critic, DEFAULT_STEP, |tape, s| self.critic_loss(tape, s, &batch));
        let mut actor = self.actor_store.clone();
        let a = check_gradients(&mut actor, DEFAULT_STEP, |tape, s| {
            let mut rng = rng_from_seed(derive_seed(seed, 7));
            self.actor_loss(tape, s, &self.critic_store, &batch, false, &mut rng)
        });
        merge_reports(&[a, c])
    }

    fn parameters(&self) -> Vec<&ParamStore> {
        vec![&self.actor_store, &self.actor_target, &self.critic_store, &self.critic_target]
    }

    fn parameters_mut(&mut self) -> Vec<&mut ParamStore> {
        vec![
            &mut self.actor_store,
            &mut self.actor_target,
            &mut self.critic_store,
            &mut self.critic_target,
        ]
    }
}
