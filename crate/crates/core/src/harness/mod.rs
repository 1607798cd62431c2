//! Experiment orchestration: configuration, synthetic benchmark generation,
//! training, prior fitting, reconstruction and evaluation. Commands talk to
//! each other only through files below the run directory.

pub mod config;
pub mod eval;
pub mod pipeline;
pub mod svg;
pub mod synth;

pub use config::ExperimentConfig;
pub use eval::{cmd_evaluate, EvalRow, EvalSummary};
pub use pipeline::{cmd_fit_prior, cmd_reconstruct, cmd_train, Condition, ReconstructTarget};
pub use synth::{cmd_synth, Manifest};

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::geometry::GeometryError;
use crate::inference::InferenceError;
use crate::masks::MaskError;
use crate::metrics::MetricError;
use crate::neural::NeuralError;
use crate::prior::PriorError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing input {0}; run the earlier pipeline step first")]
    MissingInput(PathBuf),
    #[error("prior was fitted on autoencoder {prior} but the current model is {model}")]
    HashMismatch { prior: String, model: String },
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl HarnessError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }
}

pub(crate) fn create_dir(path: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<(), HarnessError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| HarnessError::Format(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    if !path.exists() {
        return Err(HarnessError::MissingInput(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| HarnessError::Format(format!("{}: {e}", path.display())))
}

/// Applies `f` to every item on up to `available_parallelism` scoped
/// threads. Output order matches input order, so results do not depend on
/// scheduling.
pub(crate) fn par_map<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(usize, &T) -> Result<R, HarnessError> + Sync,
) -> Result<Vec<R>, HarnessError> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(items.len().max(1));
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let f = &f;
    let parts: Vec<Result<Vec<R>, HarnessError>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                s.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(j, t)| f(c * chunk + j, t))
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
