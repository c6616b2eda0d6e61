//! COMA: actors trained with a counterfactual baseline from a centralised
//! action-value critic, which is fitted to TD(lambda) targets.

use rand::Rng as _;

use super::agents::{hidden_widths, AgentNets};
use super::common::{coma_advantage, softmax, RewardStandardiser, TargetSync};
use super::config::{Algorithm, TrainerConfig};
use super::policy::{log_prob_and_entropy, policy_act, sample_actions, Rollout};
use super::{merge_reports, EnvFactory, TrainError, TrainStats, Trainer};
use crate::autodiff::gradcheck::{check_gradients, GradCheckReport, DEFAULT_STEP};
use crate::autodiff::{clip_grad_norm, Activation, Adam, AdamConfig, Mlp, ParamStore, Tape, Tensor, Var};
use crate::env::vector::VecEnv;
use crate::env::{JointAction, JointObservation, MultiAgentEnv};
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// Critic input for `agent`: the global state, every other agent's action
/// one-hot (the agent's own block left at zero) and the agent's identity.
pub fn coma_critic_input(state: &[f32], actions: &[usize], agent: usize, width: usize) -> Vec<f64> {
    let n = actions.len();
    let mut row: Vec<f64> = state.iter().map(|&x| x as f64).collect();
    let base = row.len();
    row.resize(base + n * width + n, 0.0);
    for (j, &a) in actions.iter().enumerate() {
        if j != agent {
            row[base + j * width + a] = 1.0;
        }
    }
    row[base + n * width + agent] = 1.0;
    row
}

/// TD(lambda) targets along one worker's steps.
///
/// `next_q[t]` is the target critic's value of the next state and next
/// action. Terminal steps use the reward alone; steps that end an episode by
/// truncation or end the segment bootstrap from `next_q` only.
pub fn td_lambda_targets(
    rewards: &[f64],
    next_q: &[f64],
    terminated: &[bool],
    truncated: &[bool],
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let len = rewards.len();
    let mut out = vec![0.0; len];
    for t in (0..len).rev() {
        out[t] = if terminated[t] {
            rewards[t]
        } else if truncated[t] || t + 1 == len {
            rewards[t] + gamma * next_q[t]
        } else {
            rewards[t] + gamma * ((1.0 - lambda) * next_q[t] + lambda * out[t + 1])
        };
    }
    out
}

struct ComaBatch {
    actor_inputs: Vec<Tensor>,
    critic_inputs: Vec<Tensor>,
    actions: Vec<Vec<usize>>,
    targets: Vec<Tensor>,
    advantages: Vec<Tensor>,
}

pub struct ComaTrainer {
    cfg: TrainerConfig,
    venv: VecEnv<Box<dyn MultiAgentEnv>>,
    actors: AgentNets,
    actor_store: ParamStore,
    actor_adam: Adam,
    critic: Mlp,
    critic_store: ParamStore,
    critic_target: ParamStore,
    critic_adam: Adam,
    sync: TargetSync,
    standardiser: RewardStandardiser,
    width: usize,
    pending: Option<Vec<JointAction>>,
    rng: Rng,
    env_steps: u64,
    updates: u64,
    episodes: u64,
    last_loss: Option<f64>,
}

impl ComaTrainer {
    pub fn new(cfg: TrainerConfig, make_env: EnvFactory<'_>, seed: u64) -> Result<Self, TrainError> {
        cfg.validate()?;
        assert_eq!(cfg.algorithm, Algorithm::Coma);
        let envs = (0..cfg.n_workers).map(|_| make_env()).collect::<Result<Vec<_>, _>>()?;
        let obs_dims = envs[0].observation_space().dims().to_vec();
        let sizes = envs[0].action_space().sizes().to_vec();
        let width = envs[0].action_space().max_size();
        let n = obs_dims.len();
        let mut venv = VecEnv::new(envs, derive_seed(seed, 3));
        venv.reset()?;
        let mut init = rng_from_seed(derive_seed(seed, 1));
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
        let mut critic_store = ParamStore::new();
        let critic_in = obs_dims.iter().sum::<usize>() + n * width + n;
        let critic = Mlp::new(
            &mut critic_store,
            &hidden_widths(critic_in, cfg.hidden_dim, width),
            Activation::Relu,
            &mut init,
        );
        Ok(Self {
            actor_adam: Adam::new(&actor_store, AdamConfig::with_lr(cfg.lr)),
            critic_adam: Adam::new(&critic_store, AdamConfig::with_lr(cfg.lr)),
            critic_target: critic_store.clone(),
            sync: TargetSync::new(cfg.target_update),
            standardiser: RewardStandardiser::new(cfg.reward_standardisation, cfg.gamma, cfg.n_workers),
            rng: rng_from_seed(derive_seed(seed, 2)),
            venv,
            actors,
            actor_store,
            critic,
            critic_store,
            width,
            pending: None,
            cfg,
            env_steps: 0,
            updates: 0,
            episodes: 0,
            last_loss: None,
        })
    }

    fn n_agents(&self) -> usize {
        self.actors.n_agents()
    }

    /// Critic values over `agent`'s actions for each (state, joint action).
    pub fn critic_q(&self, store: &ParamStore, states: &[Vec<f32>], actions: &[JointAction], agent: usize) -> Tensor {
        let rows: Vec<Vec<f64>> = states
            .iter()
            .zip(actions)
            .map(|(s, a)| coma_critic_input(s, a, agent, self.width))
            .collect();
        self.critic.infer(store, &Tensor::from_rows(&rows))
    }

    /// Policy of `agent` and the counterfactual advantage of each of its
    /// actions, the other agents' actions held fixed.
    pub fn counterfactual(&self, obs: &JointObservation, actions: &JointAction, agent: usize) -> (Vec<f64>, Vec<f64>) {
        let valid = self.actors.action_size(agent);
        let logits = self.actors.infer_joint(&self.actor_store, obs);
        let pi = softmax(&logits[agent][..valid]);
        let q = self.critic_q(&self.critic_store, &[obs.concat()], std::slice::from_ref(actions), agent);
        let q = &q.row_slice(0)[..valid];
        let adv = (0..valid).map(|a| coma_advantage(q, &pi, a)).collect();
        (pi, adv)
    }

    fn collect(&mut self) -> Result<(Rollout, Vec<JointAction>), TrainError> {
        let workers = self.venv.len();
        let mut rollout = Rollout::new(workers);
        // Next actions, filled in once known.
        let mut next_actions: Vec<Option<JointAction>> = Vec::new();
        for _ in 0..self.cfg.n_step {
            let obs = self.venv.observations().to_vec();
            let actions = match self.pending.take() {
                Some(a) => a,
                None => sample_actions(&self.actors, &self.actor_store, &obs, &mut self.rng),
            };
            let results = self.venv.step(&actions)?;
            let start = rollout.len();
            if start >= workers {
                for w in 0..workers {
                    if next_actions[start - workers + w].is_none() {
                        next_actions[start - workers + w] = Some(actions[w].clone());
                    }
                }
            }
            for (w, (res, (o, a))) in results.into_iter().zip(obs.into_iter().zip(actions)).enumerate() {
                let reward = self.venv.envs()[w].team_reward(&res.rewards);
                let done = res.all_done();
                self.standardiser.observe(w, reward, done);
                let truncated = done && !res.terminated();
                if done {
                    self.episodes += 1;
                }
                // An episode cut by the time limit needs an action at its
                // final observation for bootstrapping; it is never executed.
                let next = if truncated {
                    Some(sample_actions(&self.actors, &self.actor_store, std::slice::from_ref(&res.next_obs), &mut self.rng).remove(0))
                } else if done {
                    Some(a.clone())
                } else {
                    None
                };
                next_actions.push(next);
                rollout.obs.push(o);
                rollout.actions.push(a);
                rollout.rewards.push(reward);
                rollout.terminated.push(res.terminated());
                rollout.truncated.push(truncated);
                rollout.next_obs.push(res.next_obs);
            }
            self.env_steps += workers as u64;
        }
        let obs = self.venv.observations().to_vec();
        let upcoming = sample_actions(&self.actors, &self.actor_store, &obs, &mut self.rng);
        let len = rollout.len();
        for w in 0..workers {
            if next_actions[len - workers + w].is_none() {
                next_actions[len - workers + w] = Some(upcoming[w].clone());
            }
        }
        self.pending = Some(upcoming);
        Ok((rollout, next_actions.into_iter().map(Option::unwrap).collect()))
    }

    fn make_batch(&self, rollout: &Rollout, next_actions: &[JointAction]) -> ComaBatch {
        let n = self.n_agents();
        let refs: Vec<&JointObservation> = rollout.obs.iter().collect();
        let states: Vec<Vec<f32>> = rollout.obs.iter().map(JointObservation::concat).collect();
        let next_states: Vec<Vec<f32>> = rollout.next_obs.iter().map(JointObservation::concat).collect();
        let scale = 1.0 / self.standardiser.divisor();
        let rewards: Vec<f64> = rollout.rewards.iter().map(|r| r * scale).collect();
        let mut actor_inputs = Vec::with_capacity(n);
        let mut critic_inputs = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        let mut advantages = Vec::with_capacity(n);
        for i in 0..n {
            let x = self.actors.inputs_from_obs(i, &refs);
            let logits = self.actors.infer(&self.actor_store, i, &x);
            let q_next = self.critic_q(&self.critic_target, &next_states, next_actions, i);
            let q_now = self.critic_q(&self.critic_store, &states, &rollout.actions, i);
            let next_q: Vec<f64> = (0..rollout.len()).map(|k| q_next.get(k, next_actions[k][i])).collect();
            let mut g = vec![0.0; rollout.len()];
            for w in 0..rollout.workers {
                let idx: Vec<usize> = rollout.worker_indices(w).collect();
                let gw = td_lambda_targets(
                    &idx.iter().map(|&k| rewards[k]).collect::<Vec<_>>(),
                    &idx.iter().map(|&k| next_q[k]).collect::<Vec<_>>(),
                    &idx.iter().map(|&k| rollout.terminated[k]).collect::<Vec<_>>(),
                    &idx.iter().map(|&k| rollout.truncated[k]).collect::<Vec<_>>(),
                    self.cfg.gamma,
                    self.cfg.coma_lambda,
                );
                for (&k, v) in idx.iter().zip(gw) {
                    g[k] = v;
                }
            }
            let adv: Vec<f64> = (0..rollout.len())
                .map(|k| {
                    let valid = self.actors.action_size(i);
                    let pi = softmax(&logits.row_slice(k)[..valid]);
                    coma_advantage(&q_now.row_slice(k)[..valid], &pi, rollout.actions[k][i])
                })
                .collect();
            let rows: Vec<Vec<f64>> = states
                .iter()
                .zip(&rollout.actions)
                .map(|(s, a)| coma_critic_input(s, a, i, self.width))
                .collect();
            actor_inputs.push(x);
            critic_inputs.push(Tensor::from_rows(&rows));
            actions.push(rollout.actions.iter().map(|a| a[i]).collect::<Vec<_>>());
            targets.push(Tensor::column(&g));
            advantages.push(Tensor::column(&adv));
        }
        ComaBatch {
            actor_inputs,
            critic_inputs,
            actions,
            targets,
            advantages,
        }
    }

    fn loss(&self, tape: &mut Tape, actor: &ParamStore, critic: &ParamStore, batch: &ComaBatch) -> Var {
        let mut terms = Vec::new();
        for i in 0..self.n_agents() {
            let (lp, entropy) = log_prob_and_entropy(tape, &self.actors, actor, i, &batch.actor_inputs[i], &batch.actions[i]);
            let adv = tape.constant(batch.advantages[i].clone());
            let pg = tape.mul(lp, adv);
            let pg = tape.mean(pg);
            let bonus = tape.scale(entropy, self.cfg.entropy_coef);
            let gain = tape.add(pg, bonus);
            terms.push(tape.neg(gain));
            let x = tape.constant(batch.critic_inputs[i].clone());
            let q = self.critic.forward(tape, critic, x);
            let q = tape.gather(q, &batch.actions[i]);
            let y = tape.constant(batch.targets[i].clone());
            terms.push(tape.mse(q, y));
        }
        let all = tape.concat_cols(&terms);
        tape.sum(all)
    }

    fn update(&mut self, rollout: &Rollout, next_actions: &[JointAction]) -> f64 {
        let batch = self.make_batch(rollout, next_actions);
        let mut tape = Tape::new();
        let loss = self.loss(&mut tape, &self.actor_store, &self.critic_store, &batch);
        tape.backward(loss).expect("scalar loss");
        self.actor_store.accumulate_grads(&tape);
        self.critic_store.accumulate_grads(&tape);
        clip_grad_norm(&mut self.actor_store, self.cfg.grad_clip);
        clip_grad_norm(&mut self.critic_store, self.cfg.grad_clip);
        self.actor_adam.step(&mut self.actor_store);
        self.critic_adam.step(&mut self.critic_store);
        self.sync.after_update(&self.critic_store, &mut self.critic_target);
        self.updates += 1;
        tape.value(loss).item()
    }

    fn synthetic_batch(&self, seed: u64) -> ComaBatch {
        let mut rng = rng_from_seed(seed);
        let env = &self.venv.envs()[0];
        let dims = env.observation_space().dims().to_vec();
        let sizes = env.action_space().sizes().to_vec();
        let b = 6;
        let draw = |rng: &mut Rng| -> Vec<JointObservation> {
            (0..b)
                .map(|_| JointObservation::new(dims.iter().map(|&d| (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).collect()))
                .collect()
        };
        let obs = draw(&mut rng);
        let next_obs = draw(&mut rng);
        let sample = |rng: &mut Rng| -> Vec<JointAction> {
            (0..b).map(|_| sizes.iter().map(|&s| rng.gen_range(0..s)).collect()).collect()
        };
        let actions = sample(&mut rng);
        let next_actions = sample(&mut rng);
        let rollout = Rollout {
            workers: 2,
            actions,
            rewards: (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            terminated: (0..b).map(|k| k == 1).collect(),
            truncated: vec![false; b],
            obs,
            next_obs,
        };
        self.make_batch(&rollout, &next_actions)
    }
}

impl Trainer for ComaTrainer {
    fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    fn env_steps(&self) -> u64 {
        self.env_steps
    }

    fn train_until(&mut self, env_steps: u64) -> Result<TrainStats, TrainError> {
        while self.env_steps < env_steps {
            let (rollout, next_actions) = self.collect()?;
            self.last_loss = Some(self.update(&rollout, &next_actions));
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
        let mut actor = self.actor_store.clone();
        let a = check_gradients(&mut actor, DEFAULT_STEP, |tape, s| self.loss(tape, s, &self.critic_store, &batch));
        let mut critic = self.critic_store.clone();
        let c = check_gradients(&mut critic, DEFAULT_STEP, |tape, s| self.loss(tape, &self.actor_store, s, &batch));
        merge_reports(&[a, c])
    }

    fn parameters(&self) -> Vec<&ParamStore> {
        vec![&self.actor_store, &self.critic_store, &self.critic_target]
    }

    fn parameters_mut(&mut self) -> Vec<&mut ParamStore> {
        vec![&mut self.actor_store, &mut self.critic_store, &mut self.critic_target]
    }
}
