//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub config: AdamConfig,
    first: Vec<Tensor<F>>,
    second: Vec<Tensor<F>>,
    step: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(config: AdamConfig, params: &ParamStore<F>) -> Self {
        let zeros = || params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. A non-finite gradient aborts before any
    /// parameter is touched.
    pub fn step(&mut self, params: &mut ParamStore<F>, grads: &Gradients<F>) -> Result<()> {
        if grads.len() != params.len() || self.first.len() != params.len() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                left: vec![params.len()],
                right: vec![grads.len()],
            });
        }
        for (id, g) in params.ids().zip(grads.as_slice()) {
            if g.shape() != params.get(id).shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    left: params.get(id).shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter {}", params.name(id))));
            }
        }

        self.step += 1;
        let c = &self.config;
        let cast = F::from_f64_lossy;
        let (b1, b2, eps) = (cast(c.beta1), cast(c.beta2), cast(c.epsilon));
        let t = self.step as i32;
        let bc1 = cast(1.0 - c.beta1.powi(t));
        let bc2 = cast(1.0 - c.beta2.powi(t));
        let lr = cast(c.learning_rate);
        let one = F::one();

        for (i, g) in grads.as_slice().iter().enumerate() {
            let p = params.tensors_mut()[i].data_mut();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j];
                m[j] = b1 * m[j] + (one - b1) * gj;
                v[j] = b2 * v[j] + (one - b2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
