use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::rng::Rng;

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed)
}

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Trainable tensors plus their accumulated gradients.
///
/// Every store carries a process-unique id so that several stores (online
/// and target networks, say) can be bound to the same tape without mixing up
/// their gradients. Cloning yields a new id.
#[derive(Debug)]
pub struct ParamStore {
    id: u64,
    params: Vec<Tensor>,
    grads: Vec<Tensor>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        Self {
            id: fresh_id(),
            params: self.params.clone(),
            grads: self.grads.clone(),
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            id: fresh_id(),
            params: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn add(&mut self, value: Tensor) -> ParamId {
        self.grads.push(Tensor::zeros(value.rows(), value.cols()));
        self.params.push(value);
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalars.
    pub fn n_scalars(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0]
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn grads(&self) -> &[Tensor] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [Tensor] {
        &mut self.grads
    }

    /// Record parameter `id` on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape, id: ParamId) -> Var {
        tape.bind_param(self.id, id.0, &self.params[id.0])
    }

    /// Add the gradients of the tape's last backward sweep to this store.
    pub fn accumulate_grads(&mut self, tape: &Tape) {
        for (i, v) in tape.bound_params(self.id) {
            if let Some(g) = tape.grad(v) {
                self.grads[i].add_assign(g);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.data_mut().fill(0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.data())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    fn assert_same_layout(&self, other: &ParamStore) {
        assert_eq!(self.params.len(), other.params.len(), "parameter count mismatch");
        for (a, b) in self.params.iter().zip(&other.params) {
            assert_eq!(a.shape(), b.shape(), "parameter shape mismatch");
        }
    }

    /// Overwrite every value with `other`'s.
    pub fn copy_from(&mut self, other: &ParamStore) {
        self.assert_same_layout(other);
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            a.data_mut().copy_from_slice(b.data());
        }
    }

    /// `self <- tau * other + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, other: &ParamStore, tau: f64) {
        self.assert_same_layout(other);
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += tau * (y - *x);
            }
        }
    }

    /// All values flattened in registration order.
    pub fn flat(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.data().iter().copied()).collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.grads.iter().flat_map(|p| p.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.n_scalars(), "flat length mismatch");
        let mut offset = 0;
        for p in &mut self.params {
            let n = p.len();
            p.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Elu,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Elu => tape.elu(x),
        }
    }

    fn apply_value(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
        }
    }
}

/// Fully-connected network whose weights live in a [`ParamStore`].
///
/// Hidden layers use `activation`; the output layer is linear. Weights and
/// biases start uniform in `±1/sqrt(fan_in)`.
#[derive(Clone, Debug)]
pub struct Mlp {
    widths: Vec<usize>,
    layers: Vec<(ParamId, ParamId)>,
    activation: Activation,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, widths: &[usize], activation: Activation, rng: &mut Rng) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        assert!(widths.iter().all(|&w| w > 0), "layer widths must be positive");
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut init = |rows, cols| {
                    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
                    Tensor::new(rows, cols, data)
                };
                let weight = init(fan_in, fan_out);
                let bias = init(1, fan_out);
                (store.add(weight), store.add(bias))
            })
            .collect();
        Self {
            widths: widths.to_vec(),
            layers,
            activation,
        }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Parameter ids in layer order, weight then bias.
    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    pub fn n_params(&self) -> usize {
        self.widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    /// The bias of the output layer.
    pub fn output_bias(&self) -> ParamId {
        self.layers.last().unwrap().1
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let wv = store.bind(tape, w);
            let bv = store.bind(tape, b);
            let z = tape.matmul(h, wv);
            h = tape.add(z, bv);
            if i < last {
                h = self.activation.apply(tape, h);
            }
        }
        h
    }

    /// Forward pass without recording anything.
    pub fn infer(&self, store: &ParamStore, x: &Tensor) -> Tensor {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = Tape::affine(&h, store.get(w), store.get(b));
            if i < last {
                let act = self.activation;
                h.data_mut().iter_mut().for_each(|v| *v = act.apply_value(*v));
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn parameter_count_matches_layer_formula() {
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, &[5, 64, 64, 3], Activation::Relu, &mut rng_from_seed(0));
        assert_eq!(mlp.n_params(), 6 * 64 + 65 * 64 + 65 * 3);
        assert_eq!(store.n_scalars(), mlp.n_params());
    }

    #[test]
    fn infer_matches_taped_forward() {
        let mut rng = rng_from_seed(3);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, &[4, 8, 2], Activation::Elu, &mut rng);
        let x = Tensor::new(3, 4, (0..12).map(|i| i as f64 * 0.1 - 0.5).collect());
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = mlp.forward(&mut tape, &store, xv);
        let direct = mlp.infer(&store, &x);
        for (a, b) in tape.value(y).data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn product_rule_gradient() {
        let mut store = ParamStore::new();
        let w = store.add(Tensor::scalar(3.0));
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(2.0));
        let wv = store.bind(&mut tape, w);
        let y = tape.matmul(x, wv);
        tape.backward(y).unwrap();
        store.accumulate_grads(&tape);
        assert_eq!(store.grads()[0].item(), 2.0);
    }

    #[test]
    fn detached_values_have_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0));
        let d = tape.detach(x);
        let y = tape.square(d);
        tape.backward(y).unwrap();
        assert!(tape.grad(d).is_none());
        assert!(tape.grad(x).is_none());
    }

    #[test]
    fn clones_bind_independently() {
        let mut online = ParamStore::new();
        let id = online.add(Tensor::scalar(1.0));
        let target = online.clone();
        let mut tape = Tape::new();
        let a = online.bind(&mut tape, id);
        let b = target.bind(&mut tape, id);
        assert_ne!(a, b);
        let s = tape.add(a, b);
        tape.backward(s).unwrap();
        online.accumulate_grads(&tape);
        assert_eq!(online.grads()[0].item(), 1.0);
    }

    #[test]
    fn soft_update_fixed_point_and_decay() {
        let mut rng = rng_from_seed(1);
        let mut online = ParamStore::new();
        Mlp::new(&mut online, &[3, 4, 2], Activation::Relu, &mut rng);
        let mut target = online.clone();
        target.soft_update_from(&online, 0.01);
        assert_eq!(target.flat(), online.flat());

        let mut far = online.clone();
        far.set_flat(&vec![0.0; online.n_scalars()]);
        for _ in 0..1000 {
            far.soft_update_from(&online, 0.01);
        }
        let theta = online.flat();
        let gap: f64 = far.flat().iter().zip(&theta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(gap < 1e-4 * norm);
    }
}
