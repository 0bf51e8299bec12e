//! First-order optimizer and target-network machinery.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::ParamVec;

/// Adam moment buffers, serializable for exact checkpoint resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub state: AdamState,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            state: AdamState { m: vec![0.0; len], v: vec![0.0; len], t: 0 },
            beta1,
            beta2,
            eps,
        }
    }

    pub fn from_state(state: AdamState, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { state, beta1, beta2, eps }
    }

    pub fn step(&mut self, params: &mut ParamVec, grads: &ParamVec, lr: f64) -> Result<()> {
        params.check_same_shape(grads)?;
        if params.len() != self.state.m.len() {
            return Err(Error::Contract("optimizer state length mismatch".into()));
        }
        self.state.t += 1;
        let t = self.state.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads.data[i];
            let m = &mut self.state.m[i];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            let v = &mut self.state.v[i];
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            params.data[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Scales gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_grad_norm(grads: &mut ParamVec, max_norm: f64) -> f64 {
    let norm = grads.l2_norm();
    if max_norm > 0.0 && norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.data.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

/// Element-wise Polyak update target <- rho * online + (1 - rho) * target.
pub fn polyak_update(target: &mut ParamVec, online: &ParamVec, rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Config(format!("polyak rho {rho} must be in (0, 1]")));
    }
    target.check_same_shape(online)?;
    for (t, o) in target.data.iter_mut().zip(&online.data) {
        *t = rho * o + (1.0 - rho) * *t;
    }
    Ok(())
}
