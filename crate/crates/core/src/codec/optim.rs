use serde::{Deserialize, Serialize};

use super::net::{Gradients, Network};

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
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam state for one network.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Gradients,
    v: Gradients,
    t: u64,
}

impl Adam {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        Self { config, m: Gradients::zeros_like(net), v: Gradients::zeros_like(net), t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) {
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let m = self.m.weight.iter_mut().zip(self.m.bias.iter_mut()).flat_map(|(a, b)| [a, b]);
        let v = self.v.weight.iter_mut().zip(self.v.bias.iter_mut()).flat_map(|(a, b)| [a, b]);
        let g = grads.weight.iter().zip(&grads.bias).flat_map(|(a, b)| [a, b]);
        for (((p, m), v), g) in net.params_mut().into_iter().zip(m).zip(v).zip(g) {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}
