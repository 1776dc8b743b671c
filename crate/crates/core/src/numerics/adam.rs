//! Bias-corrected Adam over a [`ParamStore`].

use super::{NumericsError, ParamStore};

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 penalty folded into the gradient before the moment update.
    pub weight_decay: f64,
    pub t: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let shapes: Vec<usize> = store.ids().map(|id| store.value(id).len()).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            t: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }
}

/// One Adam update, in registration order.
///
/// Gradients are validated before any value moves, so a fault leaves the
/// store and the moments untouched.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState) -> Result<(), NumericsError> {
    assert_eq!(state.first.len(), store.len(), "optimizer built for another store");
    for id in store.ids() {
        if let Some(index) = store.grad(id).iter().position(|g| !g.is_finite()) {
            return Err(NumericsError::NonFiniteGradient {
                param: store.meta(id).name.clone(),
                index,
            });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps, lr, wd) = (
        state.beta1,
        state.beta2,
        state.epsilon,
        state.lr,
        state.weight_decay,
    );
    for id in store.ids() {
        let m = &mut state.first[id.0];
        let v = &mut state.second[id.0];
        let (value, grad) = store.value_and_grad(id);
        for i in 0..value.len() {
            let g = grad[i] + wd * value[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
