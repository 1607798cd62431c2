//! Autoencoder training with the mean-normalized 3D Chamfer loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::autoencoder::{points_to_rows, rows_to_points, Architecture, Autoencoder};
use super::NeuralError;
use crate::geometry::PointCloud3;
use crate::metrics::{chamfer_with_grad, ChamferOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk(0)
    }
}

impl TrainConfig {
    /// 150 epochs, batch 16, lr 1e-3, latent 32, 256 points, desk widths.
    pub fn desk(seed: u64) -> Self {
        Self {
            epochs: 150,
            batch_size: 16,
            learning_rate: 1e-3,
            seed,
            architecture: Architecture::desk(32, 256),
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(NeuralError::InvalidConfig(
                "epochs, batch size and learning rate must be positive".into(),
            ));
        }
        self.architecture.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sample Chamfer loss of each epoch, measured on the batches
    /// as they were trained.
    pub epoch_losses: Vec<f64>,
}

/// Loss and parameter gradients of one minibatch, averaged over its samples.
pub(crate) fn batch_gradients(
    model: &Autoencoder,
    batch: &[&PointCloud3],
) -> Result<(Vec<f64>, Vec<Vec<f64>>), NeuralError> {
    let enc = model.encoder.encode_traced(batch)?;
    let dec = model.decoder.forward_traced(enc.codes().clone())?;
    let clouds = rows_to_points(dec.output());
    let scale = 1.0 / batch.len() as f64;
    let mut losses = Vec::with_capacity(batch.len());
    let mut grads = Vec::with_capacity(batch.len());
    for (pred, target) in clouds.iter().zip(batch) {
        let (loss, mut g) = chamfer_with_grad(pred, target.points(), ChamferOptions::default())?;
        g.iter_mut().flatten().for_each(|v| *v *= scale);
        losses.push(loss);
        grads.push(g);
    }
    let (dec_grads, code_grad) = model.decoder.backward(&dec, points_to_rows(&grads), true)?;
    let enc_grads = model
        .encoder
        .backward(&enc, code_grad.expect("input gradient requested"))?;
    let blocks = enc_grads
        .point
        .blocks()
        .into_iter()
        .chain(enc_grads.head.blocks())
        .chain(dec_grads.blocks())
        .map(<[f64]>::to_vec)
        .collect();
    Ok((losses, blocks))
}

pub fn train_autoencoder(
    dataset: &[PointCloud3],
    cfg: &TrainConfig,
) -> Result<(Autoencoder, TrainReport), NeuralError> {
    train_autoencoder_with(dataset, cfg, |_, _| {})
}

/// Like [`train_autoencoder`], calling `on_epoch(epoch, loss)` after each
/// epoch.
pub fn train_autoencoder_with(
    dataset: &[PointCloud3],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(Autoencoder, TrainReport), NeuralError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(NeuralError::EmptyDataset);
    }
    let mut model = Autoencoder::random(
        &cfg.architecture,
        &mut crate::seed::stream(cfg.seed, "init", 0),
    )?;
    let names = model.block_names();
    let sizes: Vec<usize> = model.blocks_mut().iter().map(|b| b.len()).collect();
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.learning_rate), &sizes);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut crate::seed::stream(cfg.seed, "shuffle", epoch as u64));
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PointCloud3> = chunk.iter().map(|&i| &dataset[i]).collect();
            let (losses, grads) = batch_gradients(&model, &batch)?;
            total += losses.iter().sum::<f64>();
            if !total.is_finite() {
                return Err(NeuralError::Diverged { epoch });
            }
            let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
            adam.step(&mut model.blocks_mut(), &grad_refs, &names)
                .map_err(|e| match e {
                    NeuralError::NonFiniteGradient(_) => NeuralError::Diverged { epoch },
                    other => other,
                })?;
        }
        let loss = total / dataset.len() as f64;
        log::debug!("epoch {epoch}: loss {loss:.6}");
        on_epoch(epoch, loss);
        epoch_losses.push(loss);
    }
    Ok((model, TrainReport { epoch_losses }))
}
