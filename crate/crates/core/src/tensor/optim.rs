use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Multiplier applied to the learning rate every `decay_interval` steps.
    pub decay_factor: f64,
    /// Steps between decays; 0 disables the schedule.
    pub decay_interval: usize,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            decay_factor: 0.5,
            decay_interval: 0,
        }
    }
}

/// AdamW with decoupled weight decay and a step-decay learning-rate schedule.
pub struct AdamW<T: Scalar> {
    pub config: AdamWConfig,
    params: Vec<Tensor<T>>,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    steps: usize,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(params: Vec<Tensor<T>>, config: AdamWConfig) -> Self {
        let m = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
        let v = params.iter().map(|p| vec![T::zero(); p.numel()]).collect();
        Self {
            config,
            params,
            m,
            v,
            steps: 0,
        }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Learning rate used for the next update.
    pub fn current_lr(&self) -> f64 {
        lr_at(&self.config, self.steps)
    }

    pub fn zero_grad(&self) {
        self.params.iter().for_each(Tensor::zero_grad);
    }

    /// Applies one update from the accumulated gradients. Parameters without a
    /// gradient are treated as having a zero gradient.
    pub fn step(&mut self) {
        let c = self.config;
        let lr = T::lit(self.current_lr());
        self.steps += 1;
        let t = self.steps as i32;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        let (eps, wd) = (T::lit(c.eps), T::lit(c.weight_decay));

        for ((p, m), v) in self.params.iter().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad().unwrap_or_else(|| vec![T::zero(); p.numel()]);
            p.update_values(|w| {
                for i in 0..w.len() {
                    m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                    v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                    let mh = m[i] / bc1;
                    let vh = v[i] / bc2;
                    w[i] = w[i] - lr * (mh / (vh.sqrt() + eps) + wd * w[i]);
                }
            });
        }
    }
}

/// Learning rate after `completed` updates under the step-decay schedule.
pub fn lr_at(config: &AdamWConfig, completed: usize) -> f64 {
    if config.decay_interval == 0 {
        return config.lr;
    }
    config.lr * config.decay_factor.powi((completed / config.decay_interval) as i32)
}
