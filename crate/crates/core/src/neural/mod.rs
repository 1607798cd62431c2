//! Point-cloud autoencoder: a shared per-point MLP with max pooling as the
//! encoder, a fully connected decoder, exact reverse-mode gradients, Adam,
//! and Chamfer-loss training.

mod adam;
mod autoencoder;
mod mlp;
mod persist;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use autoencoder::{Architecture, Autoencoder, Encoder, EncoderGrads, EncoderTrace, LatentCode};
pub use mlp::{Activation, Dense, Mlp, MlpGrads, MlpTrace};
pub use persist::MODEL_FORMAT_VERSION;
pub use train::{train_autoencoder, train_autoencoder_with, TrainConfig, TrainReport};

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::metrics::MetricError;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("non-finite gradient in parameter block {0}")]
    NonFiniteGradient(String),
    #[error("non-finite parameter in {0}")]
    NonFiniteParameter(String),
    #[error("training diverged: loss became non-finite in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
