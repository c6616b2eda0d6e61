//! Monotonic mixing network.

use crate::autodiff::{Activation, Mlp, ParamStore, Tape, Tensor, Var};
use crate::rng::Rng;

/// `Q_tot = elu(q W1(s) + b1(s)) w2(s) + V(s)` with `W1 = |hyper_w1(s)|` and
/// `w2 = |hyper_w2(s)|`, so `Q_tot` is non-decreasing in every agent value.
#[derive(Clone, Debug)]
pub struct QmixMixer {
    n_agents: usize,
    embed: usize,
    hyper_w1: Mlp,
    hyper_b1: Mlp,
    hyper_w2: Mlp,
    value: Mlp,
}

impl QmixMixer {
    pub fn new(store: &mut ParamStore, n_agents: usize, state_dim: usize, embed: usize, rng: &mut Rng) -> Self {
        Self {
            n_agents,
            embed,
            hyper_w1: Mlp::new(store, &[state_dim, n_agents * embed], Activation::Relu, rng),
            hyper_b1: Mlp::new(store, &[state_dim, embed], Activation::Relu, rng),
            hyper_w2: Mlp::new(store, &[state_dim, embed], Activation::Relu, rng),
            value: Mlp::new(store, &[state_dim, embed, 1], Activation::Relu, rng),
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn embed(&self) -> usize {
        self.embed
    }

    /// Parameter tensors of every hyper-network.
    pub fn param_ids(&self) -> Vec<crate::autodiff::ParamId> {
        [&self.hyper_w1, &self.hyper_b1, &self.hyper_w2, &self.value]
            .iter()
            .flat_map(|m| m.param_ids())
            .collect()
    }

    /// Bias of the state-value head; the only non-zero output when every
    /// other hyper-network emits zeros.
    pub fn final_bias(&self) -> crate::autodiff::ParamId {
        self.value.output_bias()
    }

    /// `agent_qs` is `B x n_agents`, `states` is `B x state_dim`; returns `B x 1`.
    pub fn mix(&self, tape: &mut Tape, store: &ParamStore, agent_qs: Var, states: Var) -> Var {
        assert_eq!(tape.shape(agent_qs).1, self.n_agents, "one value per agent");
        let w1 = self.hyper_w1.forward(tape, store, states);
        let w1 = tape.abs(w1);
        let b1 = self.hyper_b1.forward(tape, store, states);
        let h = tape.batch_vecmat(agent_qs, w1);
        let h = tape.add(h, b1);
        let h = tape.elu(h);
        let w2 = self.hyper_w2.forward(tape, store, states);
        let w2 = tape.abs(w2);
        let y = tape.mul(h, w2);
        let y = tape.sum_cols(y);
        let v = self.value.forward(tape, store, states);
        tape.add(y, v)
    }

    /// Gradient-free evaluation.
    pub fn infer(&self, store: &ParamStore, agent_qs: &Tensor, states: &Tensor) -> Vec<f64> {
        let mut tape = Tape::new();
        let q = tape.constant(agent_qs.clone());
        let s = tape.constant(states.clone());
        let out = self.mix(&mut tape, store, q, s);
        tape.value(out).data().to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn degenerate_mixer_returns_final_bias() {
        let mut store = ParamStore::new();
        let mixer = QmixMixer::new(&mut store, 2, 3, 4, &mut rng_from_seed(0));
        for p in store.params_mut() {
            p.data_mut().fill(0.0);
        }
        let b = mixer.final_bias().index();
        store.params_mut()[b].data_mut()[0] = 2.5;
        let out = mixer.infer(
            &store,
            &Tensor::new(2, 2, vec![1.0, -3.0, 7.0, 0.5]),
            &Tensor::new(2, 3, vec![0.1, 0.2, 0.3, 1.0, 1.0, 1.0]),
        );
        assert_eq!(out, vec![2.5, 2.5]);
    }
}
