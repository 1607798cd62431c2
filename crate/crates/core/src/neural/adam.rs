//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::NeuralError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
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

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zeroed moments for parameter blocks of the given sizes.
    pub fn new(config: AdamConfig, block_sizes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            first: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over all blocks. Gradients are validated before any
    /// parameter changes; a non-finite entry aborts with the block's name.
    pub fn step(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
        names: &[String],
    ) -> Result<(), NeuralError> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(NeuralError::DimensionMismatch {
                what: "Adam parameter blocks".into(),
                expected: self.first.len(),
                got: params.len().min(grads.len()),
            });
        }
        for (b, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[b].len() || g.len() != p.len() {
                return Err(NeuralError::DimensionMismatch {
                    what: format!("Adam block {}", names.get(b).map_or("?", String::as_str)),
                    expected: self.first[b].len(),
                    got: g.len(),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NeuralError::NonFiniteGradient(
                    names
                        .get(b)
                        .cloned()
                        .unwrap_or_else(|| format!("block {b}")),
                ));
            }
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
        for (b, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[b], &mut self.second[b]);
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
