//! JSON model files. Weights are stored as hex-float strings so a saved
//! model reloads bit-identically.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::autoencoder::{Autoencoder, Encoder};
use super::mlp::{Activation, Dense, Mlp};
use super::NeuralError;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerFile {
    input: usize,
    output: usize,
    activation: Activation,
    /// Row-major `[input, output]`.
    #[serde(with = "crate::hexfloat::vec")]
    weight: Vec<f64>,
    #[serde(with = "crate::hexfloat::vec")]
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    n_points: usize,
    latent_dim: usize,
    encoder_point: Vec<LayerFile>,
    encoder_head: Vec<LayerFile>,
    decoder: Vec<LayerFile>,
}

fn layers_to_file(mlp: &Mlp) -> Vec<LayerFile> {
    mlp.layers()
        .iter()
        .map(|d| LayerFile {
            input: d.input_dim(),
            output: d.output_dim(),
            activation: d.activation,
            weight: d.weight.iter().copied().collect(),
            bias: d.bias.to_vec(),
        })
        .collect()
}

fn layers_from_file(layers: Vec<LayerFile>) -> Result<Mlp, NeuralError> {
    let dense = layers
        .into_iter()
        .enumerate()
        .map(|(l, f)| {
            let weight = Array2::from_shape_vec((f.input, f.output), f.weight).map_err(|_| {
                NeuralError::Format(format!(
                    "layer {l}: weight size does not match {}x{}",
                    f.input, f.output
                ))
            })?;
            if f.bias.len() != f.output {
                return Err(NeuralError::Format(format!(
                    "layer {l}: bias size {} != {}",
                    f.bias.len(),
                    f.output
                )));
            }
            Ok(Dense {
                weight,
                bias: Array1::from(f.bias),
                activation: f.activation,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Mlp::from_layers(dense)
}

impl Autoencoder {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            n_points: self.n_points(),
            latent_dim: self.latent_dim(),
            encoder_point: layers_to_file(&self.encoder.point),
            encoder_head: layers_to_file(&self.encoder.head),
            decoder: layers_to_file(&self.decoder),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| NeuralError::Format(e.to_string()))?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(NeuralError::Format(format!(
                "unsupported format version {}",
                file.format_version
            )));
        }
        let model = Autoencoder::new(
            Encoder {
                point: layers_from_file(file.encoder_point)?,
                head: layers_from_file(file.encoder_head)?,
            },
            layers_from_file(file.decoder)?,
        )?;
        if model.n_points() != file.n_points || model.latent_dim() != file.latent_dim {
            return Err(NeuralError::Format(
                "declared sizes disagree with layer shapes".into(),
            ));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NeuralError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NeuralError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the serialized model, used to tie fitted priors to the
    /// model they were fitted against.
    pub fn version_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}
