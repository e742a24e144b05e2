//! Adam parameter updates.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{arg_err, shape_err, TensorError};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
) -> Result<(), TensorError> {
    if lr <= 0.0 || !lr.is_finite() {
        return Err(arg_err("learning rate must be positive"));
    }
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(shape_err("parameter, gradient and state lengths differ"));
    }
    state.step += 1;
    let bc1 = 1.0 - libm::pow(ADAM_BETA1, state.step as f64);
    let bc2 = 1.0 - libm::pow(ADAM_BETA2, state.step as f64);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPS);
    }
    Ok(())
}
