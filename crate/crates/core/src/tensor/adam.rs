//! Adam with optional decoupled weight decay.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// First/second moment buffers for one parameter array.
#[derive(Debug, Clone, Default)]
pub struct AdamParamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamParamState {
    pub fn zeros(len: usize) -> Self {
        AdamParamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One Adam update on a single array. `t` is the 1-based step count.
pub fn adam_step(
    param: &mut [f64],
    grad: &[f64],
    state: &mut AdamParamState,
    t: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    if param.len() != grad.len() || param.len() != state.m.len() {
        return Err(Error::contract(format!(
            "adam_step: param/grad/state lengths disagree ({}/{}/{})",
            param.len(),
            grad.len(),
            state.m.len()
        )));
    }
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        if cfg.weight_decay != 0.0 {
            param[i] -= cfg.lr * cfg.weight_decay * param[i];
        }
        param[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Optimizer bundling the per-array states and the shared step counter.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    states: Vec<AdamParamState>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, param_lens: &[usize]) -> Self {
        Adam {
            states: param_lens.iter().map(|&l| AdamParamState::zeros(l)).collect(),
            cfg,
            t: 0,
        }
    }

    /// Applies one step to every array; order must match construction.
    pub fn step(&mut self, params: &mut [&mut Vec<f64>], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.states.len() || grads.len() != self.states.len() {
            return Err(Error::contract(format!(
                "adam: expected {} parameter arrays, got {} params / {} grads",
                self.states.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.states) {
            adam_step(p, g, s, self.t, &self.cfg)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_zero_state_leaves_params_unchanged() {
        let cfg = AdamConfig::new(0.1, 0.0);
        let mut p = vec![1.5, -0.3];
        let mut s = AdamParamState::zeros(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 1, &cfg).unwrap();
        assert_eq!(p, vec![1.5, -0.3]);
    }

    #[test]
    fn single_step_descends_quadratic() {
        // f(w) = w^2, grad = 2w, from w = 1
        let cfg = AdamConfig::new(0.1, 0.0);
        let mut p = vec![1.0];
        let mut s = AdamParamState::zeros(1);
        adam_step(&mut p, &[2.0], &mut s, 1, &cfg).unwrap();
        assert!(p[0] < 1.0 && p[0] > 0.0, "got {}", p[0]);
    }

    #[test]
    fn converges_on_two_parameter_quadratic() {
        // f(w) = w0^2 + w1^2; 200 steps must reach |w| < 1e-2
        let cfg = AdamConfig::new(0.05, 0.0);
        let mut adam = Adam::new(cfg, &[2]);
        let mut w = vec![1.0, -0.7];
        for _ in 0..200 {
            let g = vec![2.0 * w[0], 2.0 * w[1]];
            adam.step(&mut [&mut w], &[g]).unwrap();
        }
        let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
        assert!(norm < 1e-2, "norm after 200 steps: {norm}");
    }

    #[test]
    fn length_mismatch_rejected() {
        let cfg = AdamConfig::new(0.1, 0.0);
        let mut p = vec![1.0];
        let mut s = AdamParamState::zeros(2);
        assert!(adam_step(&mut p, &[1.0], &mut s, 1, &cfg).is_err());
    }
}
