//! Actor-critic trainers: IA2C and IPPO with per-agent critics on local
//! observations, MAA2C and MAPPO with one critic on the global state.

use rand::Rng as _;

use super::agents::{hidden_widths, AgentNets};
use super::common::{nstep_returns_truncated, sample_categorical, softmax, RewardStandardiser, TargetSync};
use super::config::{Algorithm, TrainerConfig};
use super::{merge_reports, EnvFactory, TrainError, TrainStats, Trainer};
use crate::autodiff::gradcheck::{check_gradients, GradCheckReport, DEFAULT_STEP};
use crate::autodiff::{clip_grad_norm, Activation, Adam, AdamConfig, Mlp, ParamStore, Tape, Tensor, Var};
use crate::env::vector::VecEnv;
use crate::env::{JointAction, JointObservation, MultiAgentEnv};
use crate::rng::{derive_seed, rng_from_seed, Rng};

#[derive(Clone, Debug)]
pub(crate) enum Critic {
    /// `V_i(o_i)` per agent.
    Local(AgentNets),
    /// `V(s)` on the concatenated observations.
    Central(Mlp),
}

/// Rollout of `steps x workers` transitions, flattened step-major.
pub(crate) struct Rollout {
    pub workers: usize,
    pub obs: Vec<JointObservation>,
    pub actions: Vec<JointAction>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    pub next_obs: Vec<JointObservation>,
}

impl Rollout {
    pub fn new(workers: usize) -> Self {
        Self {
            workers,
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminated: Vec::new(),
            truncated: Vec::new(),
            next_obs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn steps(&self) -> usize {
        self.len() / self.workers
    }

    /// Flat indices belonging to worker `w`, in time order.
    pub fn worker_indices(&self, w: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.steps()).map(move |t| t * self.workers + w)
    }
}

/// Fixed quantities of one update.
pub(crate) struct PolicyBatch {
    pub actor_inputs: Vec<Tensor>,
    pub critic_inputs: Vec<Tensor>,
    pub actions: Vec<Vec<usize>>,
    pub returns: Vec<Tensor>,
    pub advantages: Vec<Tensor>,
    pub old_log_probs: Vec<Tensor>,
}

pub(crate) fn state_rows(obs: &[JointObservation]) -> Tensor {
    let rows: Vec<Vec<f64>> = obs.iter().map(|o| o.concat().into_iter().map(|x| x as f64).collect()).collect();
    Tensor::from_rows(&rows)
}

/// Sample a joint action for each worker from the actors' policies.
pub(crate) fn sample_actions(
    actors: &AgentNets,
    store: &ParamStore,
    obs: &[JointObservation],
    rng: &mut Rng,
) -> Vec<JointAction> {
    let refs: Vec<&JointObservation> = obs.iter().collect();
    let per_agent: Vec<Tensor> = (0..actors.n_agents())
        .map(|i| actors.infer(store, i, &actors.inputs_from_obs(i, &refs)))
        .collect();
    (0..obs.len())
        .map(|w| {
            per_agent
                .iter()
                .map(|logits| sample_categorical(&softmax(logits.row_slice(w)), rng))
                .collect()
        })
        .collect()
}

pub(crate) fn policy_act(actors: &AgentNets, store: &ParamStore, obs: &JointObservation, rng: &mut Rng) -> JointAction {
    actors
        .infer_joint(store, obs)
        .iter()
        .map(|l| sample_categorical(&softmax(l), rng))
        .collect()
}

/// Log-probabilities of taken actions and mean policy entropy for `agent`.
pub(crate) fn log_prob_and_entropy(
    tape: &mut Tape,
    actors: &AgentNets,
    store: &ParamStore,
    agent: usize,
    input: &Tensor,
    actions: &[usize],
) -> (Var, Var) {
    let x = tape.constant(input.clone());
    let logits = actors.forward(tape, store, agent, x);
    let logp = tape.log_softmax(logits);
    let probs = tape.exp(logp);
    let plogp = tape.mul(probs, logp);
    let neg_entropy = tape.sum_cols(plogp);
    let neg_entropy = tape.mean(neg_entropy);
    let entropy = tape.neg(neg_entropy);
    (tape.gather(logp, actions), entropy)
}

pub struct PolicyTrainer {
    cfg: TrainerConfig,
    venv: VecEnv<Box<dyn MultiAgentEnv>>,
    ppo: bool,
    actors: AgentNets,
    actor_store: ParamStore,
    actor_adam: Adam,
    critic: Critic,
    critic_store: ParamStore,
    critic_target: ParamStore,
    critic_adam: Adam,
    sync: TargetSync,
    standardiser: RewardStandardiser,
    rng: Rng,
    env_steps: u64,
    updates: u64,
    episodes: u64,
    last_loss: Option<f64>,
    ratio_deviation: Option<f64>,
}

impl PolicyTrainer {
    pub fn new(cfg: TrainerConfig, make_env: EnvFactory<'_>, seed: u64) -> Result<Self, TrainError> {
        cfg.validate()?;
        let (central, ppo) = match cfg.algorithm {
            Algorithm::Ia2c => (false, false),
            Algorithm::Ippo => (false, true),
            Algorithm::Maa2c => (true, false),
            Algorithm::Mappo => (true, true),
            other => panic!("{other} is not an actor-critic trainer"),
        };
        let envs = (0..cfg.n_workers).map(|_| make_env()).collect::<Result<Vec<_>, _>>()?;
        let obs_dims = envs[0].observation_space().dims().to_vec();
        let sizes = envs[0].action_space().sizes().to_vec();
        let width = envs[0].action_space().max_size();
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
        let critic = if central {
            let state_dim = obs_dims.iter().sum();
            Critic::Central(Mlp::new(
                &mut critic_store,
                &hidden_widths(state_dim, cfg.hidden_dim, 1),
                Activation::Relu,
                &mut init,
            ))
        } else {
            Critic::Local(AgentNets::new(
                &mut critic_store,
                &obs_dims,
                &sizes,
                1,
                false,
                cfg.hidden_dim,
                cfg.parameter_sharing,
                &mut init,
            ))
        };
        let critic_target = critic_store.clone();
        Ok(Self {
            actor_adam: Adam::new(&actor_store, AdamConfig::with_lr(cfg.lr)),
            critic_adam: Adam::new(&critic_store, AdamConfig::with_lr(cfg.lr)),
            sync: TargetSync::new(cfg.target_update),
            standardiser: RewardStandardiser::new(cfg.reward_standardisation, cfg.gamma, cfg.n_workers),
            rng: rng_from_seed(derive_seed(seed, 2)),
            venv,
            ppo,
            actors,
            actor_store,
            critic,
            critic_store,
            critic_target,
            cfg,
            env_steps: 0,
            updates: 0,
            episodes: 0,
            last_loss: None,
            ratio_deviation: None,
        })
    }

    /// Largest `|ratio - 1|` over the first epoch of the latest PPO update.
    pub fn first_epoch_ratio_deviation(&self) -> Option<f64> {
        self.ratio_deviation
    }

    /// Action probabilities of every agent.
    pub fn policy(&self, obs: &JointObservation) -> Vec<Vec<f64>> {
        self.actors
            .infer_joint(&self.actor_store, obs)
            .iter()
            .map(|l| softmax(l))
            .collect()
    }

    fn n_agents(&self) -> usize {
        self.actors.n_agents()
    }

    fn critic_inputs(&self, obs: &[JointObservation]) -> Vec<Tensor> {
        let refs: Vec<&JointObservation> = obs.iter().collect();
        match &self.critic {
            Critic::Local(nets) => (0..self.n_agents()).map(|i| nets.inputs_from_obs(i, &refs)).collect(),
            Critic::Central(_) => vec![state_rows(obs)],
        }
    }

    fn critic_values(&self, store: &ParamStore, inputs: &[Tensor]) -> Vec<Vec<f64>> {
        match &self.critic {
            Critic::Local(nets) => inputs
                .iter()
                .enumerate()
                .map(|(i, x)| nets.infer(store, i, x).into_data())
                .collect(),
            Critic::Central(mlp) => vec![mlp.infer(store, &inputs[0]).into_data()],
        }
    }

    fn critic_forward(&self, tape: &mut Tape, store: &ParamStore, head: usize, input: &Tensor) -> Var {
        let x = tape.constant(input.clone());
        match &self.critic {
            Critic::Local(nets) => nets.forward(tape, store, head, x),
            Critic::Central(mlp) => mlp.forward(tape, store, x),
        }
    }

    fn collect(&mut self) -> Result<Rollout, TrainError> {
        let workers = self.venv.len();
        let mut rollout = Rollout::new(workers);
        for _ in 0..self.cfg.n_step {
            let obs = self.venv.observations().to_vec();
            let actions = sample_actions(&self.actors, &self.actor_store, &obs, &mut self.rng);
            let results = self.venv.step(&actions)?;
            for (w, (res, (o, a))) in results.into_iter().zip(obs.into_iter().zip(actions)).enumerate() {
                let reward = self.venv.envs()[w].team_reward(&res.rewards);
                let done = res.all_done();
                self.standardiser.observe(w, reward, done);
                if done {
                    self.episodes += 1;
                }
                rollout.obs.push(o);
                rollout.actions.push(a);
                rollout.rewards.push(reward);
                rollout.terminated.push(res.terminated());
                rollout.truncated.push(done && !res.terminated());
                rollout.next_obs.push(res.next_obs);
            }
            self.env_steps += workers as u64;
        }
        Ok(rollout)
    }

    /// Actor and critic inputs, returns and advantages for a rollout.
    fn make_batch(&self, rollout: &Rollout) -> PolicyBatch {
        let n = self.n_agents();
        let refs: Vec<&JointObservation> = rollout.obs.iter().collect();
        let actor_inputs: Vec<Tensor> = (0..n).map(|i| self.actors.inputs_from_obs(i, &refs)).collect();
        let critic_inputs = self.critic_inputs(&rollout.obs);
        let next_inputs = self.critic_inputs(&rollout.next_obs);
        let next_values = self.critic_values(&self.critic_target, &next_inputs);
        let values = self.critic_values(&self.critic_store, &critic_inputs);
        let scale = 1.0 / self.standardiser.divisor();
        let rewards: Vec<f64> = rollout.rewards.iter().map(|r| r * scale).collect();
        let returns: Vec<Vec<f64>> = next_values
            .iter()
            .map(|nv| {
                let mut g = vec![0.0; rollout.len()];
                for w in 0..rollout.workers {
                    let idx: Vec<usize> = rollout.worker_indices(w).collect();
                    let pick_f = |v: &[f64]| idx.iter().map(|&k| v[k]).collect::<Vec<_>>();
                    let pick_b = |v: &[bool]| idx.iter().map(|&k| v[k]).collect::<Vec<_>>();
                    let gw = nstep_returns_truncated(
                        &pick_f(&rewards),
                        &pick_f(nv),
                        &pick_b(&rollout.terminated),
                        &pick_b(&rollout.truncated),
                        self.cfg.gamma,
                        self.cfg.n_step,
                    );
                    for (&k, v) in idx.iter().zip(gw) {
                        g[k] = v;
                    }
                }
                g
            })
            .collect();
        let advantages: Vec<Tensor> = (0..n)
            .map(|i| {
                let head = i.min(returns.len() - 1);
                Tensor::column(
                    &returns[head]
                        .iter()
                        .zip(&values[head])
                        .map(|(g, v)| g - v)
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        let actions: Vec<Vec<usize>> = (0..n).map(|i| rollout.actions.iter().map(|a| a[i]).collect()).collect();
        let mut batch = PolicyBatch {
            actor_inputs,
            critic_inputs,
            actions,
            returns: returns.iter().map(|g| Tensor::column(g)).collect(),
            advantages,
            old_log_probs: Vec::new(),
        };
        batch.old_log_probs = self.log_probs(&self.actor_store, &batch);
        batch
    }

    /// Taken-action log-probabilities under `store`, computed through the
    /// same graph the loss uses.
    fn log_probs(&self, store: &ParamStore, batch: &PolicyBatch) -> Vec<Tensor> {
        let mut tape = Tape::new();
        (0..self.n_agents())
            .map(|i| {
                let (lp, _) = log_prob_and_entropy(&mut tape, &self.actors, store, i, &batch.actor_inputs[i], &batch.actions[i]);
                tape.value(lp).clone()
            })
            .collect()
    }

    /// Actor plus critic loss. Also returns the policy ratios for PPO.
    fn loss(&self, tape: &mut Tape, actor: &ParamStore, critic: &ParamStore, batch: &PolicyBatch) -> (Var, Vec<Var>) {
        let mut terms = Vec::new();
        let mut ratios = Vec::new();
        for i in 0..self.n_agents() {
            let (lp, entropy) = log_prob_and_entropy(tape, &self.actors, actor, i, &batch.actor_inputs[i], &batch.actions[i]);
            let adv = tape.constant(batch.advantages[i].clone());
            let objective = if self.ppo {
                let old = tape.constant(batch.old_log_probs[i].clone());
                let diff = tape.sub(lp, old);
                let ratio = tape.exp(diff);
                ratios.push(ratio);
                let s1 = tape.mul(ratio, adv);
                let clipped = tape.clamp(ratio, 1.0 - self.cfg.ppo_clip, 1.0 + self.cfg.ppo_clip);
                let s2 = tape.mul(clipped, adv);
                let m = tape.min(s1, s2);
                tape.mean(m)
            } else {
                let pg = tape.mul(lp, adv);
                tape.mean(pg)
            };
            let bonus = tape.scale(entropy, self.cfg.entropy_coef);
            let gain = tape.add(objective, bonus);
            terms.push(tape.neg(gain));
        }
        for (head, (x, g)) in batch.critic_inputs.iter().zip(&batch.returns).enumerate() {
            let v = self.critic_forward(tape, critic, head, x);
            let y = tape.constant(g.clone());
            terms.push(tape.mse(v, y));
        }
        let all = tape.concat_cols(&terms);
        (tape.sum(all), ratios)
    }

    fn update(&mut self, rollout: &Rollout) -> f64 {
        let batch = self.make_batch(rollout);
        let epochs = if self.ppo { self.cfg.ppo_epochs } else { 1 };
        let mut value = 0.0;
        for epoch in 0..epochs {
            let mut tape = Tape::new();
            let (loss, ratios) = self.loss(&mut tape, &self.actor_store, &self.critic_store, &batch);
            if epoch == 0 && self.ppo {
                let dev = ratios
                    .iter()
                    .flat_map(|&r| tape.value(r).data().to_vec())
                    .map(|r| (r - 1.0).abs())
                    .fold(0.0, f64::max);
                self.ratio_deviation = Some(dev);
            }
            tape.backward(loss).expect("scalar loss");
            value = tape.value(loss).item();
            self.actor_store.accumulate_grads(&tape);
            self.critic_store.accumulate_grads(&tape);
            clip_grad_norm(&mut self.actor_store, self.cfg.grad_clip);
            clip_grad_norm(&mut self.critic_store, self.cfg.grad_clip);
            self.actor_adam.step(&mut self.actor_store);
            self.critic_adam.step(&mut self.critic_store);
            self.sync.after_update(&self.critic_store, &mut self.critic_target);
            self.updates += 1;
        }
        value
    }

    /// Loss on a synthetic batch with zero advantages, for checking that
    /// only the entropy term drives the actor.
    pub fn zero_advantage_actor_gradient(&self, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut batch = self.synthetic_batch(seed);
        for a in &mut batch.advantages {
            a.data_mut().fill(0.0);
        }
        let mut tape = Tape::new();
        let (loss, _) = self.loss(&mut tape, &self.actor_store, &self.critic_store, &batch);
        tape.backward(loss).unwrap();
        let mut full = self.actor_store.clone();
        full.zero_grad();
        full.accumulate_grads(&tape);
        let mut tape = Tape::new();
        let mut terms = Vec::new();
        for i in 0..self.n_agents() {
            let (_, h) = log_prob_and_entropy(&mut tape, &self.actors, &self.actor_store, i, &batch.actor_inputs[i], &batch.actions[i]);
            terms.push(tape.scale(h, -self.cfg.entropy_coef));
        }
        let all = tape.concat_cols(&terms);
        let total = tape.sum(all);
        tape.backward(total).unwrap();
        let mut ent = self.actor_store.clone();
        ent.zero_grad();
        ent.accumulate_grads(&tape);
        (full.flat_grads(), ent.flat_grads())
    }

    fn synthetic_batch(&self, seed: u64) -> PolicyBatch {
        let mut rng = rng_from_seed(seed);
        let dims = self.venv.envs()[0].observation_space().dims().to_vec();
        let sizes = self.venv.envs()[0].action_space().sizes().to_vec();
        let b = 6;
        let draw = |rng: &mut Rng| -> Vec<JointObservation> {
            (0..b)
                .map(|_| JointObservation::new(dims.iter().map(|&d| (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).collect()))
                .collect()
        };
        let obs = draw(&mut rng);
        let next_obs = draw(&mut rng);
        let rollout = Rollout {
            workers: 1,
            actions: (0..b).map(|_| sizes.iter().map(|&s| rng.gen_range(0..s)).collect()).collect(),
            rewards: (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            terminated: (0..b).map(|k| k == 2).collect(),
            truncated: vec![false; b],
            obs,
            next_obs,
        };
        let mut batch = self.make_batch(&rollout);
        // Move the old policy away from the current one so that ratios differ from 1.
        for lp in &mut batch.old_log_probs {
            for (k, v) in lp.data_mut().iter_mut().enumerate() {
                *v += 0.05 * (k as f64 - 2.5);
            }
        }
        batch
    }
}

impl Trainer for PolicyTrainer {
    fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    fn env_steps(&self) -> u64 {
        self.env_steps
    }

    fn train_until(&mut self, env_steps: u64) -> Result<TrainStats, TrainError> {
        while self.env_steps < env_steps {
            let rollout = self.collect()?;
            self.last_loss = Some(self.update(&rollout));
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
        let a = check_gradients(&mut actor, DEFAULT_STEP, |tape, s| {
            self.loss(tape, s, &self.critic_store, &batch).0
        });
        let mut critic = self.critic_store.clone();
        let c = check_gradients(&mut critic, DEFAULT_STEP, |tape, s| {
            self.loss(tape, &self.actor_store, s, &batch).0
        });
        merge_reports(&[a, c])
    }

    fn parameters(&self) -> Vec<&ParamStore> {
        vec![&self.actor_store, &self.critic_store, &self.critic_target]
    }

    fn parameters_mut(&mut self) -> Vec<&mut ParamStore> {
        vec![&mut self.actor_store, &mut self.critic_store, &mut self.critic_target]
    }
}
