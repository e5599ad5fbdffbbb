//! Adam optimizer with bias correction.

use super::batch::Scalar;
use super::model::Model;

#[derive(Clone, Debug)]
pub struct AdamState<F> {
    m: Vec<F>,
    v: Vec<F>,
}

impl<F: Scalar> AdamState<F> {
    pub fn zeros(len: usize) -> Self {
        AdamState { m: vec![F::zero(); len], v: vec![F::zero(); len] }
    }
}

/// One Adam update. `t` is the 1-indexed global step count used for bias
/// correction.
pub fn adam_step<F: Scalar>(
    params: &mut [F],
    grads: &[F],
    state: &mut AdamState<F>,
    t: usize,
    lr: F,
    beta1: F,
    beta2: F,
    eps: F,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    debug_assert!(t >= 1, "Adam steps are 1-indexed");
    let c1 = F::one() - beta1.powi(t as i32);
    let c2 = F::one() - beta2.powi(t as i32);
    let one = F::one();
    for j in 0..params.len() {
        let g = grads[j];
        state.m[j] = beta1 * state.m[j] + (one - beta1) * g;
        state.v[j] = beta2 * state.v[j] + (one - beta2) * g * g;
        let m_hat = state.m[j] / c1;
        let v_hat = state.v[j] / c2;
        params[j] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Optimizer bound to a model: one state pair per parameter tensor, stepped
/// in the model's fixed visiting order.
#[derive(Debug)]
pub struct Adam<F> {
    beta1: F,
    beta2: F,
    eps: F,
    t: usize,
    states: Vec<AdamState<F>>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(model: &mut Model<F>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let mut states = Vec::new();
        model.for_each_param(&mut |p, _| states.push(AdamState::zeros(p.len())));
        Adam { beta1: F::of(beta1), beta2: F::of(beta2), eps: F::of(eps), t: 0, states }
    }

    pub fn step(&mut self, model: &mut Model<F>, lr: f64) {
        self.t += 1;
        let (t, b1, b2, eps) = (self.t, self.beta1, self.beta2, self.eps);
        let states = &mut self.states;
        let mut k = 0;
        model.for_each_param(&mut |p, g| {
            adam_step(p, g, &mut states[k], t, F::of(lr), b1, b2, eps);
            k += 1;
        });
    }

    pub fn steps_taken(&self) -> usize {
        self.t
    }
}
