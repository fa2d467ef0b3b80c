use serde::{Deserialize, Serialize};

use super::param::ParamStore;
use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            weight_decay: 1e-3,
            betas: (0.9, 0.999),
            eps: 1e-8,
        }
    }
}

/// Adam with decoupled weight decay. Moment buffers are indexed like the
/// store they were created for.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step_count: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = |p: &super::Parameter| Matrix::zeros(p.value.rows(), p.value.cols());
        Self {
            config,
            step_count: 0,
            first: store.iter().map(zeros).collect(),
            second: store.iter().map(zeros).collect(),
        }
    }

    /// Restores optimizer state, e.g. from a checkpoint.
    pub fn from_state(
        config: AdamConfig,
        step_count: u64,
        first: Vec<Matrix>,
        second: Vec<Matrix>,
    ) -> Self {
        Self {
            config,
            step_count,
            first,
            second,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn moments(&self) -> (&[Matrix], &[Matrix]) {
        (&self.first, &self.second)
    }

    /// Applies one update to every trainable parameter using the gradients
    /// left by the last backward pass.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if !store.has_gradients() {
            return Err(Error::State(
                "adam step requested before any backward pass".into(),
            ));
        }
        if store.len() != self.first.len() {
            return Err(Error::State(format!(
                "optimizer tracks {} parameters, store has {}",
                self.first.len(),
                store.len()
            )));
        }
        self.step_count += 1;
        let AdamConfig {
            lr,
            weight_decay,
            betas: (b1, b2),
            eps,
        } = self.config;
        let t = self.step_count as i32;
        let correction1 = 1.0 - b1.powi(t);
        let correction2 = 1.0 - b2.powi(t);

        for ((param, m), v) in store
            .iter_mut()
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            if !param.trainable {
                continue;
            }
            let values = param.value.data_mut();
            let grads = param.grad.data();
            for (((w, &g), mk), vk) in values
                .iter_mut()
                .zip(grads)
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *w -= lr * weight_decay * *w;
                *mk = b1 * *mk + (1.0 - b1) * g;
                *vk = b2 * *vk + (1.0 - b2) * g * g;
                let m_hat = *mk / correction1;
                let v_hat = *vk / correction2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
