//! Gaussian mixture shape prior over latent codes: EM fitting, a stable
//! negative log-likelihood and its analytic gradient.
//!
//! For a code `l` the prior term is
//!
//! ```text
//! NLL(l) = −log Σ_k π_k N(l | μ_k, Σ_k)
//! ∇NLL(l) = Σ_k r_k(l) Σ_k⁻¹ (l − μ_k)
//! ```
//!
//! where `r_k` are the posterior responsibilities at `l`.

mod em;
mod gmm;

pub use em::{fit_gmm, CovarianceType, EmConfig, EmReport, InitMethod};
pub use gmm::{GmmModel, GMM_FORMAT_VERSION};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("expected latent dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{samples} samples cannot fit {k} components")]
    TooFewSamples { samples: usize, k: usize },
    #[error("latent codes contain non-finite values")]
    NonFinite,
    #[error("covariance of component {0} is not symmetric positive definite")]
    NotPositiveDefinite(usize),
    #[error("component {component} collapsed again after {events} re-initializations")]
    RepeatedCollapse { component: usize, events: usize },
    #[error("invalid mixture: {0}")]
    InvalidModel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("mixture file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
