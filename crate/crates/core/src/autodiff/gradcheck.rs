//! Central finite-difference gradient checker.
//!
//! It only ever evaluates the forward pass, so it is an independent check on
//! the reverse sweep.

use super::nn::ParamStore;
use super::tape::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

pub const DEFAULT_STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-6;

/// Compare backpropagated gradients of `loss` against central differences
/// for every scalar in `store`. `loss` must be a pure function of the store.
pub fn check_gradients<F>(store: &mut ParamStore, h: f64, mut loss: F) -> GradCheckReport
where
    F: FnMut(&mut Tape, &ParamStore) -> Var,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let l = loss(&mut tape, store);
    tape.backward(l).expect("gradient check needs a scalar loss");
    store.accumulate_grads(&tape);
    let analytic = store.flat_grads();
    store.zero_grad();

    let mut eval = |store: &ParamStore| {
        let mut tape = Tape::new();
        let l = loss(&mut tape, store);
        tape.value(l).item()
    };
    let base = store.flat();
    let mut flat = base.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    for i in 0..base.len() {
        flat[i] = base[i] + h;
        store.set_flat(&flat);
        let up = eval(store);
        flat[i] = base[i] - h;
        store.set_flat(&flat);
        let down = eval(store);
        flat[i] = base[i];
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(FLOOR);
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    }
    store.set_flat(&base);
    report
}
