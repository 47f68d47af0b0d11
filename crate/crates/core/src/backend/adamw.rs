//! AdamW with decoupled weight decay, shared by all trainable backends.

use serde::{Deserialize, Serialize};

/// Optimizer hyperparameters. Defaults follow common MLM fine-tuning setups.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamWParams {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamWParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamWParams {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            weight_decay,
            ..Self::default()
        }
    }
}

/// First/second moments for one flat parameter vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamWState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamWState {
    pub fn new(len: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// Advance the step counter once per optimizer step, before updating the
    /// parameter blocks belonging to that step.
    pub fn begin_step(&mut self) -> u64 {
        self.step += 1;
        self.step
    }
}

/// In-place AdamW update of one parameter block.
///
/// `offset` locates the block inside the state's flat moment vectors;
/// `step` must come from [`AdamWState::begin_step`].
pub fn update_block(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamWState,
    offset: usize,
    step: u64,
    hp: &AdamWParams,
) {
    debug_assert_eq!(params.len(), grads.len());
    let bc1 = 1.0 - hp.beta1.powi(step as i32);
    let bc2 = 1.0 - hp.beta2.powi(step as i32);
    let m = &mut state.m[offset..offset + params.len()];
    let v = &mut state.v[offset..offset + params.len()];
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -=
            hp.learning_rate * (m_hat / (v_hat.sqrt() + hp.epsilon) + hp.weight_decay * params[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_leaves_params_unchanged() {
        let mut params = vec![1.0, -2.0, 0.5];
        let grads = vec![0.0; 3];
        let mut state = AdamWState::new(3);
        let hp = AdamWParams::new(0.1, 0.0);
        let step = state.begin_step();
        update_block(&mut params, &grads, &mut state, 0, step, &hp);
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_against_gradient_sign() {
        let mut params = vec![0.0, 0.0];
        let grads = vec![3.0, -0.25];
        let mut state = AdamWState::new(2);
        let hp = AdamWParams::new(0.01, 0.0);
        let step = state.begin_step();
        update_block(&mut params, &grads, &mut state, 0, step, &hp);
        // With bias correction the first update is lr * g/(|g| + eps) = lr * sign(g).
        assert!((params[0] + 0.01).abs() < 1e-6);
        assert!((params[1] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn weight_decay_shrinks_params_at_zero_gradient() {
        let mut params = vec![1.0];
        let grads = vec![0.0];
        let mut state = AdamWState::new(1);
        let hp = AdamWParams::new(0.1, 0.5);
        let step = state.begin_step();
        update_block(&mut params, &grads, &mut state, 0, step, &hp);
        assert!((params[0] - (1.0 - 0.1 * 0.5)).abs() < 1e-12);
    }
}
