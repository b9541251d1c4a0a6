use serde::{Deserialize, Serialize};

use crate::tensor::ParameterStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(store: &ParameterStore) -> Self {
        let zeros = || store.ids().map(|id| vec![0.0; store.get(id).len()]).collect();
        AdamState {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Bias-corrected Adam update from the gradients accumulated in `store`.
pub fn adam_step(store: &mut ParameterStore, state: &mut AdamState, cfg: &AdamConfig) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let grad = store.grad(id).data().to_vec();
        let (m, v) = (&mut state.m[id.index()], &mut state.v[id.index()]);
        let value = store.get_mut(id).data_mut();
        for j in 0..grad.len() {
            let g = grad[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            value[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Tape, Tensor};

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParameterStore::new(0);
        let x = store.add("x", Tensor::vector(vec![0.5])).unwrap();
        // loss = x, so the gradient is exactly 1
        let grads = {
            let mut tape = Tape::new(&store);
            let v = tape.param(x);
            let l = tape.sum(&[v]).unwrap();
            tape.backward(l).unwrap()
        };
        store.accumulate(&grads, 1.0);
        let mut state = AdamState::new(&store);
        adam_step(&mut store, &mut state, &AdamConfig::default());
        // m_hat = v_hat = 1: update = lr / (1 + eps)
        let expected = 0.5 - 0.001 / (1.0 + 1e-8);
        assert!((store.get(x).data()[0] - expected).abs() < 1e-15);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParameterStore::new(0);
        let w = store.add_uniform("w", &[3, 3]).unwrap();
        let before = store.get(w).clone();
        let mut state = AdamState::new(&store);
        for _ in 0..5 {
            adam_step(&mut store, &mut state, &AdamConfig::default());
        }
        assert_eq!(store.get(w), &before);
    }
}
