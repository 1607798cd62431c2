use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::PriorError;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub const GMM_FORMAT_VERSION: u32 = 1;

/// Gaussian mixture over latent codes with precomputed Cholesky factors.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covariances: Vec<DMatrix<f64>>,
    epsilon: f64,
    latent_model_hash: Option<String>,
    /// Lower Cholesky factors of the covariances.
    chol: Vec<DMatrix<f64>>,
    /// `log π_k − D/2·log 2π − ½·log|Σ_k|`.
    log_norm: Vec<f64>,
}

pub(crate) fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Solves `L y = b` in place for lower-triangular `L`.
fn forward_sub(l: &DMatrix<f64>, b: &mut [f64]) {
    for i in 0..b.len() {
        let mut s = b[i];
        for j in 0..i {
            s -= l[(i, j)] * b[j];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Solves `Lᵀ x = y` in place.
fn backward_sub(l: &DMatrix<f64>, y: &mut [f64]) {
    for i in (0..y.len()).rev() {
        let mut s = y[i];
        for j in i + 1..y.len() {
            s -= l[(j, i)] * y[j];
        }
        y[i] = s / l[(i, i)];
    }
}

impl GmmModel {
    /// Validates and factorizes a mixture. Weights must be positive and sum
    /// to one within 1e-12; covariances must be symmetric positive definite.
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<DMatrix<f64>>,
        epsilon: f64,
    ) -> Result<Self, PriorError> {
        let k = weights.len();
        if k == 0 {
            return Err(PriorError::InvalidModel("mixture has no components".into()));
        }
        if means.len() != k || covariances.len() != k {
            return Err(PriorError::InvalidModel(format!(
                "{k} weights but {} means and {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(PriorError::InvalidModel("latent dimension is zero".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(PriorError::InvalidModel(
                "weights must be positive and finite".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(PriorError::InvalidModel(format!("weights sum to {total}")));
        }
        let mut chol = Vec::with_capacity(k);
        let mut log_norm = Vec::with_capacity(k);
        for (j, (mean, cov)) in means.iter().zip(&covariances).enumerate() {
            if mean.len() != d {
                return Err(PriorError::DimensionMismatch {
                    expected: d,
                    got: mean.len(),
                });
            }
            if cov.shape() != (d, d) {
                return Err(PriorError::InvalidModel(format!(
                    "covariance {j} is not {d}x{d}"
                )));
            }
            if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
                return Err(PriorError::InvalidModel(format!(
                    "component {j} has non-finite entries"
                )));
            }
            let asym = (cov - cov.transpose()).abs().max();
            if asym > 1e-12 * cov.abs().max().max(1.0) {
                return Err(PriorError::NotPositiveDefinite(j));
            }
            let l = cov
                .clone()
                .cholesky()
                .ok_or(PriorError::NotPositiveDefinite(j))?
                .unpack();
            let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            log_norm.push(weights[j].ln() - 0.5 * d as f64 * LN_2PI - 0.5 * log_det);
            chol.push(l);
        }
        Ok(Self {
            weights,
            means,
            covariances,
            epsilon,
            latent_model_hash: None,
            chol,
            log_norm,
        })
    }

    pub fn with_latent_model_hash(mut self, hash: impl Into<String>) -> Self {
        self.latent_model_hash = Some(hash.into());
        self
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn latent_model_hash(&self) -> Option<&str> {
        self.latent_model_hash.as_deref()
    }

    fn check(&self, x: &[f64]) -> Result<(), PriorError> {
        if x.len() != self.dim() {
            return Err(PriorError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Whitened residual `L_k⁻¹ (x − μ_k)`.
    fn whiten(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = x.iter().zip(&self.means[k]).map(|(a, m)| a - m).collect();
        forward_sub(&self.chol[k], &mut z);
        z
    }

    /// `log π_k + log N(x | μ_k, Σ_k)` for every component.
    pub(crate) fn component_log_densities(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_components())
            .map(|k| {
                let z = self.whiten(k, x);
                self.log_norm[k] - 0.5 * z.iter().map(|v| v * v).sum::<f64>()
            })
            .collect()
    }

    /// Mahalanobis distance of `x` under component `k`.
    pub fn mahalanobis(&self, k: usize, x: &[f64]) -> Result<f64, PriorError> {
        self.check(x)?;
        Ok(self.whiten(k, x).iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    pub fn log_likelihood(&self, x: &[f64]) -> Result<f64, PriorError> {
        self.check(x)?;
        Ok(logsumexp(&self.component_log_densities(x)))
    }

    /// `−log Σ_k π_k N(x | μ_k, Σ_k)`; negative where the density exceeds 1.
    pub fn nll(&self, x: &[f64]) -> Result<f64, PriorError> {
        Ok(-self.log_likelihood(x)?)
    }

    /// Posterior component probabilities at `x`, normalized to sum to one.
    pub fn responsibilities(&self, x: &[f64]) -> Result<Vec<f64>, PriorError> {
        self.check(x)?;
        let logs = self.component_log_densities(x);
        let lse = logsumexp(&logs);
        let mut r: Vec<f64> = logs.iter().map(|v| (v - lse).exp()).collect();
        let s: f64 = r.iter().sum();
        r.iter_mut().for_each(|v| *v /= s);
        Ok(r)
    }

    /// NLL and its gradient `Σ_k r_k(x) Σ_k⁻¹ (x − μ_k)`.
    pub fn nll_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>), PriorError> {
        self.check(x)?;
        let mut logs = Vec::with_capacity(self.n_components());
        let mut solved = Vec::with_capacity(self.n_components());
        for k in 0..self.n_components() {
            let mut z = self.whiten(k, x);
            logs.push(self.log_norm[k] - 0.5 * z.iter().map(|v| v * v).sum::<f64>());
            backward_sub(&self.chol[k], &mut z);
            solved.push(z);
        }
        let lse = logsumexp(&logs);
        let mut grad = vec![0.0; self.dim()];
        for (log_p, s) in logs.iter().zip(&solved) {
            let r = (log_p - lse).exp();
            for (g, v) in grad.iter_mut().zip(s) {
                *g += r * v;
            }
        }
        Ok((-lse, grad))
    }

    pub fn nll_grad(&self, x: &[f64]) -> Result<Vec<f64>, PriorError> {
        Ok(self.nll_and_grad(x)?.1)
    }

    /// A lower bound on the NLL anywhere: each component density is at most
    /// its value at its own mean, so the mixture density is at most
    /// `Σ_k π_k (2π)^{−D/2} |Σ_k|^{−1/2}`.
    pub fn nll_lower_bound(&self) -> f64 {
        -logsumexp(&self.log_norm)
    }

    /// NLL along the segment `(1 − t)·a + t·b` at `steps` evenly spaced `t`.
    pub fn likelihood_profile(
        &self,
        a: &[f64],
        b: &[f64],
        steps: usize,
    ) -> Result<Vec<(f64, f64)>, PriorError> {
        if steps < 2 {
            return Err(PriorError::InvalidConfig(
                "a profile needs at least 2 steps".into(),
            ));
        }
        self.check(a)?;
        self.check(b)?;
        (0..steps)
            .map(|i| {
                let t = i as f64 / (steps - 1) as f64;
                let x: Vec<f64> = match i {
                    0 => a.to_vec(),
                    _ if i == steps - 1 => b.to_vec(),
                    _ => a
                        .iter()
                        .zip(b)
                        .map(|(p, q)| (1.0 - t) * p + t * q)
                        .collect(),
                };
                Ok((t, self.nll(&x)?))
            })
            .collect()
    }

    /// The model with components reordered by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, PriorError> {
        let m = Self::new(
            perm.iter().map(|&i| self.weights[i]).collect(),
            perm.iter().map(|&i| self.means[i].clone()).collect(),
            perm.iter().map(|&i| self.covariances[i].clone()).collect(),
            self.epsilon,
        )?;
        Ok(Self {
            latent_model_hash: self.latent_model_hash.clone(),
            ..m
        })
    }

    pub fn to_json(&self) -> String {
        let d = self.dim();
        let file = GmmFile {
            format_version: GMM_FORMAT_VERSION,
            k: self.n_components(),
            d,
            weights: self.weights.clone(),
            means: self.means.clone(),
            covariances: self
                .covariances
                .iter()
                .map(|c| (0..d * d).map(|i| c[(i / d, i % d)]).collect())
                .collect(),
            epsilon: self.epsilon,
            latent_model_hash: self.latent_model_hash.clone(),
        };
        serde_json::to_string_pretty(&file).expect("mixture serializes")
    }

    /// Parses and validates a saved mixture, including positive definiteness.
    pub fn from_json(text: &str) -> Result<Self, PriorError> {
        let f: GmmFile =
            serde_json::from_str(text).map_err(|e| PriorError::Format(e.to_string()))?;
        if f.format_version != GMM_FORMAT_VERSION {
            return Err(PriorError::Format(format!(
                "unsupported format version {}",
                f.format_version
            )));
        }
        if f.weights.len() != f.k || f.means.len() != f.k || f.covariances.len() != f.k {
            return Err(PriorError::Format(format!("expected {} components", f.k)));
        }
        if f.means.iter().any(|m| m.len() != f.d)
            || f.covariances.iter().any(|c| c.len() != f.d * f.d)
        {
            return Err(PriorError::Format(format!("expected dimension {}", f.d)));
        }
        let covs = f
            .covariances
            .iter()
            .map(|c| DMatrix::from_row_slice(f.d, f.d, c))
            .collect();
        let m = Self::new(f.weights, f.means, covs, f.epsilon)?;
        Ok(Self {
            latent_model_hash: f.latent_model_hash,
            ..m
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PriorError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PriorError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct GmmFile {
    format_version: u32,
    k: usize,
    d: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    /// Row-major `d × d` per component.
    covariances: Vec<Vec<f64>>,
    epsilon: f64,
    latent_model_hash: Option<String>,
}
