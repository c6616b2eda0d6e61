use super::nn::ParamStore;
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = store
            .params()
            .iter()
            .map(|p| Tensor::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Apply one update from the store's accumulated gradients, then clear them.
    pub fn step(&mut self, store: &mut ParamStore) {
        assert_eq!(self.m.len(), store.len(), "optimizer state does not match the store");
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let grads: Vec<Tensor> = store.grads().to_vec();
        for (i, p) in store.params_mut().iter_mut().enumerate() {
            let (m, v, g) = (self.m[i].data_mut(), self.v[i].data_mut(), grads[i].data());
            for (j, x) in p.data_mut().iter_mut().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                *x -= lr * mh / (vh.sqrt() + eps);
            }
        }
        store.zero_grad();
    }
}

/// Rescale the store's gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in store.grads_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    fn quadratic_run() -> f64 {
        let mut store = ParamStore::new();
        let w = store.add(Tensor::scalar(0.0));
        let mut adam = Adam::new(&store, AdamConfig::with_lr(0.1));
        for _ in 0..500 {
            let mut tape = Tape::new();
            let wv = store.bind(&mut tape, w);
            let d = tape.add_scalar(wv, -3.0);
            let loss = tape.square(d);
            tape.backward(loss).unwrap();
            store.accumulate_grads(&tape);
            adam.step(&mut store);
        }
        store.get(w).item()
    }

    #[test]
    fn converges_on_quadratic() {
        let w = quadratic_run();
        assert!((w - 3.0).abs() < 1e-2, "w = {w}");
    }

    #[test]
    fn identical_runs_agree_bitwise() {
        assert_eq!(quadratic_run().to_bits(), quadratic_run().to_bits());
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParamStore::new();
        store.add(Tensor::row(&[1.0, -2.0]));
        let mut adam = Adam::new(&store, AdamConfig::default());
        adam.step(&mut store);
        assert_eq!(store.flat(), vec![1.0, -2.0]);
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut store = ParamStore::new();
        store.add(Tensor::row(&[0.0, 0.0]));
        store.grads_mut()[0] = Tensor::row(&[3.0, 4.0]);
        assert_eq!(clip_grad_norm(&mut store, 1.0), 5.0);
        assert!((store.grad_norm() - 1.0).abs() < 1e-12);
    }
}
