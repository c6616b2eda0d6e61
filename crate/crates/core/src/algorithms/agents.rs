//! Per-agent networks with optional parameter sharing.

use super::common::{logit_mask, share_parameters};
use crate::autodiff::{Activation, Mlp, ParamStore, Tape, Tensor, Var};
use crate::env::JointObservation;
use crate::rng::Rng;

/// Network layout used for every agent-facing model: two hidden layers.
pub fn hidden_widths(input: usize, hidden: usize, output: usize) -> Vec<usize> {
    vec![input, hidden, hidden, output]
}

/// One network per agent, or a single network fed padded observations plus
/// a one-hot agent identity.
///
/// When outputs are indexed by action (`action_outputs`), columns beyond an
/// agent's own action count are masked out.
#[derive(Clone, Debug)]
pub struct AgentNets {
    nets: Vec<Mlp>,
    shared: bool,
    obs_dims: Vec<usize>,
    offsets: Vec<usize>,
    max_obs: usize,
    action_sizes: Vec<usize>,
    out_dim: usize,
    masks: Vec<Option<Tensor>>,
}

impl AgentNets {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        obs_dims: &[usize],
        action_sizes: &[usize],
        out_dim: usize,
        action_outputs: bool,
        hidden: usize,
        shared: bool,
        rng: &mut Rng,
    ) -> Self {
        assert_eq!(obs_dims.len(), action_sizes.len(), "one observation and action size per agent");
        let n = obs_dims.len();
        let max_obs = obs_dims.iter().copied().max().unwrap_or(0);
        let nets = if shared {
            vec![Mlp::new(store, &hidden_widths(max_obs + n, hidden, out_dim), Activation::Relu, rng)]
        } else {
            obs_dims
                .iter()
                .map(|&d| Mlp::new(store, &hidden_widths(d, hidden, out_dim), Activation::Relu, rng))
                .collect()
        };
        let mut offsets = Vec::with_capacity(n);
        let mut acc = 0;
        for &d in obs_dims {
            offsets.push(acc);
            acc += d;
        }
        let masks = action_sizes
            .iter()
            .map(|&s| (action_outputs && s < out_dim).then(|| logit_mask(s, out_dim)))
            .collect();
        Self {
            nets,
            shared,
            obs_dims: obs_dims.to_vec(),
            offsets,
            max_obs,
            action_sizes: action_sizes.to_vec(),
            out_dim,
            masks,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.obs_dims.len()
    }

    pub fn shared(&self) -> bool {
        self.shared
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn action_size(&self, agent: usize) -> usize {
        self.action_sizes[agent]
    }

    pub fn net(&self, agent: usize) -> &Mlp {
        if self.shared {
            &self.nets[0]
        } else {
            &self.nets[agent]
        }
    }

    /// Network input for one observation of `agent`.
    pub fn input_row(&self, agent: usize, obs: &[f32]) -> Vec<f64> {
        if self.shared {
            share_parameters(obs, agent, self.n_agents(), self.max_obs)
        } else {
            obs.iter().map(|&x| x as f64).collect()
        }
    }

    /// Agent `agent`'s slice of a concatenated joint observation.
    pub fn agent_obs<'a>(&self, agent: usize, state: &'a [f32]) -> &'a [f32] {
        &state[self.offsets[agent]..self.offsets[agent] + self.obs_dims[agent]]
    }

    /// Input rows for `agent` built from concatenated joint observations.
    pub fn inputs_from_states(&self, agent: usize, states: &[&[f32]]) -> Tensor {
        let rows: Vec<Vec<f64>> = states
            .iter()
            .map(|s| self.input_row(agent, self.agent_obs(agent, s)))
            .collect();
        Tensor::from_rows(&rows)
    }

    pub fn inputs_from_obs(&self, agent: usize, obs: &[&JointObservation]) -> Tensor {
        let rows: Vec<Vec<f64>> = obs
            .iter()
            .map(|o| self.input_row(agent, &o.per_agent[agent]))
            .collect();
        Tensor::from_rows(&rows)
    }

    /// Masked outputs of `agent` for a batch of prepared inputs.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, agent: usize, input: Var) -> Var {
        let out = self.net(agent).forward(tape, store, input);
        match &self.masks[agent] {
            Some(m) => {
                let mv = tape.constant(m.clone());
                tape.add(out, mv)
            }
            None => out,
        }
    }

    pub fn infer(&self, store: &ParamStore, agent: usize, input: &Tensor) -> Tensor {
        let mut out = self.net(agent).infer(store, input);
        if let Some(m) = &self.masks[agent] {
            for r in 0..out.rows() {
                for c in 0..out.cols() {
                    let v = out.get(r, c) + m.get(0, c);
                    out.set(r, c, v);
                }
            }
        }
        out
    }

    /// Outputs of every agent for one joint observation. Shared networks
    /// evaluate all agents in a single batch.
    pub fn infer_joint(&self, store: &ParamStore, obs: &JointObservation) -> Vec<Vec<f64>> {
        let n = self.n_agents();
        if self.shared {
            let rows: Vec<Vec<f64>> = (0..n).map(|i| self.input_row(i, &obs.per_agent[i])).collect();
            let out = self.nets[0].infer(store, &Tensor::from_rows(&rows));
            (0..n)
                .map(|i| {
                    let mut row = out.row_slice(i).to_vec();
                    if let Some(m) = &self.masks[i] {
                        row.iter_mut().zip(m.data()).for_each(|(v, m)| *v += m);
                    }
                    row
                })
                .collect()
        } else {
            (0..n)
                .map(|i| {
                    let x = Tensor::row(&self.input_row(i, &obs.per_agent[i]));
                    self.infer(store, i, &x).into_data()
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn shared_inputs_are_padded_with_identity() {
        let mut store = ParamStore::new();
        let nets = AgentNets::new(&mut store, &[2, 3], &[4, 4], 4, true, 8, true, &mut rng_from_seed(0));
        assert_eq!(nets.input_row(0, &[1.0, 2.0]), vec![1.0, 2.0, 0.0, 1.0, 0.0]);
        assert_eq!(nets.net(0).input_dim(), 5);
        let state = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(nets.agent_obs(1, &state), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn masked_agents_never_prefer_invalid_actions() {
        let mut store = ParamStore::new();
        let nets = AgentNets::new(&mut store, &[2, 2], &[6, 4], 6, true, 8, true, &mut rng_from_seed(1));
        let obs = JointObservation::new(vec![vec![0.3, -0.2], vec![1.0, 0.5]]);
        let out = nets.infer_joint(&store, &obs);
        assert!(out[1][4] < -1e9 && out[1][5] < -1e9);
        assert!(out[0].iter().all(|v| v.abs() < 1e9));
    }

    #[test]
    fn joint_inference_matches_per_agent_inference() {
        let mut store = ParamStore::new();
        let nets = AgentNets::new(&mut store, &[3, 3], &[3, 3], 3, true, 8, true, &mut rng_from_seed(2));
        let obs = JointObservation::new(vec![vec![0.1, 0.2, 0.3], vec![-1.0, 0.0, 1.0]]);
        let joint = nets.infer_joint(&store, &obs);
        for i in 0..2 {
            let single = nets.infer(&store, i, &Tensor::row(&nets.input_row(i, &obs.per_agent[i])));
            for (a, b) in joint[i].iter().zip(single.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
