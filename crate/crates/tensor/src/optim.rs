use std::collections::HashMap;

use crate::params::Parameter;

#[derive(Clone, Copy, Debug, PartialEq)]
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

#[derive(Clone, Debug)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
}

/// Adam with bias-corrected moments. Moment buffers are keyed by parameter
/// name and created on first update.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: HashMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: HashMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// One update over `params`. Parameters without a gradient or with
    /// tracking disabled are left untouched.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a Parameter>) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for p in params {
            if !p.tensor.requires_grad() {
                continue;
            }
            let Some(g) = p.tensor.grad() else { continue };
            let n = g.len();
            let m = self.moments.entry(p.name.clone()).or_insert_with(|| Moments {
                first: vec![0.0; n],
                second: vec![0.0; n],
            });
            let mut data = p.tensor.data_mut();
            for i in 0..n {
                m.first[i] = beta1 * m.first[i] + (1.0 - beta1) * g[i];
                m.second[i] = beta2 * m.second[i] + (1.0 - beta2) * g[i] * g[i];
                let mh = m.first[i] / c1;
                let vh = m.second[i] / c2;
                data[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}
