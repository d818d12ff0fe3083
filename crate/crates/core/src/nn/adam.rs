use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Gradients, Mat, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam over a chosen subset of parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (Mat, Mat)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Updates every parameter for which `trainable` holds and a gradient
    /// exists. Other parameters are left bit-for-bit untouched.
    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients, trainable: impl Fn(&str) -> bool) {
        self.step += 1;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(self.step as i32);
        let bias2 = 1.0 - c.beta2.powi(self.step as i32);
        for (name, value) in store.iter_mut() {
            if !trainable(name) {
                continue;
            }
            let Some(g) = grads.params.get(name) else { continue };
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (Mat::zeros(value.rows, value.cols), Mat::zeros(value.rows, value.cols)));
            for i in 0..value.data.len() {
                let gi = g.data[i];
                m.data[i] = c.beta1 * m.data[i] + (1.0 - c.beta1) * gi;
                v.data[i] = c.beta2 * v.data[i] + (1.0 - c.beta2) * gi * gi;
                let mh = m.data[i] / bias1;
                let vh = v.data[i] / bias2;
                value.data[i] -= c.lr * mh / (vh.sqrt() + c.eps);
            }
        }
    }
}
