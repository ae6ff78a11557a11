use serde::{Deserialize, Serialize};

use super::network::Gradients;
use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<Tensor>>,
    pub v: Vec<Vec<Tensor>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &[Vec<Tensor>]) -> Self {
        let zeros = || params.iter().map(|l| l.iter().map(|t| Tensor::zeros(t.shape())).collect()).collect();
        Self { m: zeros(), v: zeros(), step: 0 }
    }

    /// One bias-corrected Adam update in place.
    pub fn step(&mut self, cfg: &AdamConfig, params: &mut [Vec<Tensor>], grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let lr = cfg.learning_rate;
        for (li, layer) in params.iter_mut().enumerate() {
            for (pi, p) in layer.iter_mut().enumerate() {
                let g = grads.tensors[li][pi].data();
                let m = self.m[li][pi].data_mut();
                let v = self.v[li][pi].data_mut();
                for (j, w) in p.data_mut().iter_mut().enumerate() {
                    m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
                    v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
                    let mhat = m[j] / c1;
                    let vhat = v[j] / c2;
                    *w -= lr * mhat / (vhat.sqrt() + cfg.epsilon);
                }
            }
        }
    }
}
