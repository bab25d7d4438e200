use serde::{Deserialize, Serialize};

use super::{Gradients, LstmRegressor, Params};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-tensor moment estimates shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Params,
    second: Params,
    step: u64,
}

impl AdamState {
    pub fn new(model: &LstmRegressor, config: AdamConfig) -> Self {
        AdamState {
            config,
            first: Params::zeros(model.config()),
            second: Params::zeros(model.config()),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of every parameter.
    pub fn step(&mut self, model: &mut LstmRegressor, grads: &Gradients) -> Result<()> {
        if !grads.same_shape(model.params()) || !self.first.same_shape(model.params()) {
            return Err(Error::Shape("gradient or moment shapes differ from the model".into()));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let first = self.first.tensors_mut();
        let second = self.second.tensors_mut();
        model.apply_update(|params| {
            for (((p, g), m), v) in params
                .tensors_mut()
                .into_iter()
                .zip(grads.tensors())
                .zip(first)
                .zip(second)
            {
                for k in 0..p.len() {
                    m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                    v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                    let m_hat = m[k] / c1;
                    let v_hat = v[k] / c2;
                    p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        });
        Ok(())
    }
}
