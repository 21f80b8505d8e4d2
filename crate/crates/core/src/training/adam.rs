use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Network;

use super::schedule::OptimizerConfig;

/// Adam moments for every trainable tensor, in [`Network::params`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: OptimizerConfig,
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(config: OptimizerConfig, net: &Network) -> Self {
        let zeros = || net.params().map(|p| vec![0.0; p.value.len()]).collect();
        Adam {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Apply one bias-corrected update with learning rate `lr` from the
    /// gradients currently stored in `net`.
    pub fn step(&mut self, net: &mut Network, lr: f64) -> Result<()> {
        if self.m.len() != net.params().count() {
            return Err(Error::State(format!(
                "optimizer tracks {} tensors, network has {}",
                self.m.len(),
                net.params().count()
            )));
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let step_size = (lr / bc1) as f32;
        let (b1, b2, eps, wd) = (c.beta1 as f32, c.beta2 as f32, c.epsilon as f32, c.weight_decay as f32);
        let inv_sqrt_bc2 = (1.0 / bc2.sqrt()) as f32;
        for ((p, m), v) in net.params_mut().zip(&mut self.m).zip(&mut self.v) {
            if m.len() != p.value.len() {
                return Err(Error::State(format!("optimizer state for {} has the wrong size", p.name)));
            }
            for i in 0..m.len() {
                let g = p.grad[i] + wd * p.value[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                p.value[i] -= step_size * m[i] / (v[i].sqrt() * inv_sqrt_bc2 + eps);
            }
        }
        Ok(())
    }
}
