//! Bias-corrected Adam.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::arch::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

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
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid Adam hyperparameters {self:?}")));
        }
        Ok(())
    }
}

/// First and second moments per parameter name, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: BTreeMap<String, Tensor<f32>>,
    pub v: BTreeMap<String, Tensor<f32>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Updates every optimized parameter of `params`. Missing gradients count
    /// as zero. Any non-finite gradient aborts before anything changes.
    pub fn step(&mut self, params: &mut ParamStore, grads: &HashMap<String, Tensor<f32>>) -> Result<()> {
        for (name, g) in grads {
            if !g.all_finite() {
                return Err(Error::NonFinite {
                    op: format!("gradient of `{name}`"),
                });
            }
            let p = params.get(name)?;
            if p.value.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "gradient of `{name}` has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.value.shape()
                )));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (name, p) in params.iter_mut() {
            if !p.trainable || p.frozen {
                continue;
            }
            let shape = p.value.shape().to_vec();
            let m = self.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(shape.clone()));
            let v = self.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(shape));
            let g = grads.get(name);
            let values = p.value.data_mut();
            for i in 0..values.len() {
                let gi = g.map_or(0.0, |g| g.data()[i] as f64);
                let mi = beta1 * m.data()[i] as f64 + (1.0 - beta1) * gi;
                let vi = beta2 * v.data()[i] as f64 + (1.0 - beta2) * gi * gi;
                m.data_mut()[i] = mi as f32;
                v.data_mut()[i] = vi as f32;
                let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
                values[i] = (values[i] as f64 - update) as f32;
            }
        }
        Ok(())
    }
}
