use crate::error::{Error, Result};

use super::{Gradients, ParameterStore, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 0.01, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step_count: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, params: &ParameterStore<T>) -> Self {
        let zeros = || params.iter().map(|p| vec![T::zero(); p.tensor.len()]).collect();
        AdamState { config, step_count: 0, first: zeros(), second: zeros() }
    }

    pub fn first_moments(&self) -> &[Vec<T>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<T>] {
        &self.second
    }

    /// Applies one update. Parameters are left untouched if any gradient is not finite.
    pub fn step(&mut self, params: &mut ParameterStore<T>, grads: &Gradients<T>) -> Result<()> {
        if grads.grads.len() != params.len() || grads.iter().zip(params.iter()).any(|(g, p)| g.len() != p.tensor.len())
        {
            return Err(Error::DimensionMismatch("gradients do not match the parameter store".into()));
        }
        if !grads.all_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.step_count += 1;
        let c = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let (inv_bc1, inv_bc2) = (T::of(1.0 / bc1), T::of(1.0 / bc2));
        let (lr, eps) = (T::of(c.lr), T::of(c.epsilon));

        for (((p, g), m), v) in params.params.iter_mut().zip(grads.iter()).zip(&mut self.first).zip(&mut self.second) {
            for (((theta, &g), m), v) in p.tensor.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let m_hat = *m * inv_bc1;
                let v_hat = *v * inv_bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
