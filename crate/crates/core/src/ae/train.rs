//! PCA-guided training loop and latent-image construction.

use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::backprop::backward;
use super::loss::cosine;
use super::network::{init_network, Network, NetworkConfig};
use crate::error::{Error, Result};
use crate::image::{min_max_normalize, unflatten};
use crate::sequence::PixelMatrix;

/// Rows per inference chunk. Fixed so outputs do not depend on threads.
const INFERENCE_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Weight of the distillation term; `0` trains a plain autoencoder.
    pub alpha: f64,
    pub max_epochs: usize,
    /// Relative epoch-loss change regarded as a plateau.
    pub convergence_tol: f64,
    /// Consecutive plateau epochs that stop training.
    pub patience: usize,
    /// Seeds the batch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 512,
            alpha: 1.0,
            max_epochs: 100,
            convergence_tol: 1e-5,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidInput(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be at least 1".into()));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Per-epoch loss trace of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub total_loss: Vec<f64>,
    pub reconstruction_loss: Vec<f64>,
    pub distillation_loss: Vec<f64>,
    /// Mean `cos(z_n, z'_n)` over all pixels before the first update.
    pub initial_mean_cosine: f64,
    pub final_mean_cosine: f64,
    pub converged: bool,
    /// Not serialized: it would make otherwise identical reports differ.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.total_loss.len()
    }
}

/// Encodes every pixel of `m`, shape `(P, d)`.
pub fn encode_all(net: &Network, data: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if data.ncols() != net.input_len() {
        return Err(Error::ShapeMismatch(format!(
            "signals have {} samples, network expects {}",
            data.ncols(),
            net.input_len()
        )));
    }
    let chunks: Vec<Array2<f64>> = data
        .axis_chunks_iter(Axis(0), INFERENCE_CHUNK)
        .into_par_iter()
        .map(|c| net.run_layers(0..net.encoder_len(), c))
        .collect();
    let views: Vec<_> = chunks.iter().map(|c| c.view()).collect();
    if views.is_empty() {
        return Ok(Array2::zeros((0, net.latent_len())));
    }
    ndarray::concatenate(Axis(0), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))
}

/// Mean cosine similarity between rows of `latents` and `targets`;
/// degenerate pairs count as zero.
pub fn mean_cosine(latents: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>) -> Result<f64> {
    if latents.dim() != targets.dim() || latents.nrows() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "latents {:?} vs targets {:?}",
            latents.dim(),
            targets.dim()
        )));
    }
    let sum: f64 = latents
        .outer_iter()
        .zip(targets.outer_iter())
        .map(|(z, t)| cosine(z, t).unwrap_or(0.0))
        .sum();
    Ok(sum / latents.nrows() as f64)
}

fn gather_rows(src: ArrayView2<'_, f64>, rows: &[usize]) -> Array2<f64> {
    src.select(Axis(0), rows)
}

/// Trains a freshly initialized network against frozen PCA latent targets.
///
/// Each epoch shuffles the pixels with a seeded generator and walks them in
/// batches without replacement; every batch runs encode, decode, the
/// combined loss, backpropagation and one Adam step. Training stops after
/// `max_epochs` or once the relative change of the epoch loss stays below
/// `convergence_tol` for `patience` consecutive epochs.
pub fn train(
    m: &PixelMatrix,
    targets: ArrayView2<'_, f64>,
    net_cfg: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    let net = init_network(net_cfg)?;
    train_from(net, m, targets, cfg)
}

/// Same as [`train`] but starting from an existing network.
pub fn train_from(
    mut net: Network,
    m: &PixelMatrix,
    targets: ArrayView2<'_, f64>,
    cfg: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    cfg.validate()?;
    if !m.is_standardized() {
        return Err(Error::InvalidInput(
            "training expects a standardized pixel matrix".into(),
        ));
    }
    if targets.nrows() != m.n_pixels() || targets.ncols() != net.latent_len() {
        return Err(Error::ShapeMismatch(format!(
            "targets {:?} for {} pixels and latent size {}",
            targets.dim(),
            m.n_pixels(),
            net.latent_len()
        )));
    }
    if m.n_frames() != net.input_len() {
        return Err(Error::ShapeMismatch(format!(
            "signals have {} samples, network expects {}",
            m.n_frames(),
            net.input_len()
        )));
    }

    let started = Instant::now();
    let data = m.data().view();
    let initial_mean_cosine = mean_cosine(encode_all(&net, data)?.view(), targets)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..m.n_pixels()).collect();
    let mut adam = AdamState::new(&net);
    let mut report = TrainReport {
        total_loss: Vec::new(),
        reconstruction_loss: Vec::new(),
        distillation_loss: Vec::new(),
        initial_mean_cosine,
        final_mean_cosine: initial_mean_cosine,
        converged: false,
        wall_clock_seconds: 0.0,
    };
    let mut plateau = 0;
    let n = m.n_pixels() as f64;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut total, mut rec, mut kd) = (0.0, 0.0, 0.0);
        for (b, rows) in order.chunks(cfg.batch_size).enumerate() {
            let batch = gather_rows(data, rows);
            let batch_targets = gather_rows(targets, rows);
            let (grads, loss) = backward(&net, batch.view(), batch_targets.view(), cfg.alpha)
                .map_err(|e| match e {
                    Error::NonFiniteActivation { layer } => Error::Diverged {
                        epoch,
                        batch: b + 1,
                        reason: format!("non-finite activation in layer {layer}"),
                    },
                    other => other,
                })?;
            if !loss.total.is_finite()
                || grads.iter().any(|g| {
                    g.weights
                        .iter()
                        .chain(g.bias.iter())
                        .any(|v| !v.is_finite())
                })
            {
                return Err(Error::Diverged {
                    epoch,
                    batch: b + 1,
                    reason: format!("loss {}", loss.total),
                });
            }
            adam_step(&mut net, &grads, &mut adam, cfg.learning_rate)?;
            let w = rows.len() as f64 / n;
            total += w * loss.total;
            rec += w * loss.reconstruction;
            kd += w * loss.distillation;
        }
        log::debug!("epoch {epoch}: total {total:.6} rec {rec:.6} kd {kd:.6}");
        if let Some(&prev) = report.total_loss.last() {
            let change = (total - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
            plateau = if change < cfg.convergence_tol {
                plateau + 1
            } else {
                0
            };
        }
        report.total_loss.push(total);
        report.reconstruction_loss.push(rec);
        report.distillation_loss.push(kd);
        if plateau >= cfg.patience {
            report.converged = true;
            break;
        }
    }

    report.final_mean_cosine = mean_cosine(encode_all(&net, data)?.view(), targets)?;
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok((net, report))
}

/// One image per latent component, each min-max normalized to `[0, 1]`
/// (constant components become uniform `0.5`).
pub fn latent_images(net: &Network, m: &PixelMatrix) -> Result<Vec<Array2<f64>>> {
    raw_latent_images(net, m).map(|imgs| imgs.iter().map(min_max_normalize).collect())
}

/// Latent components as images, without normalization.
pub fn raw_latent_images(net: &Network, m: &PixelMatrix) -> Result<Vec<Array2<f64>>> {
    if !m.is_standardized() {
        return Err(Error::InvalidInput(
            "latent images need a standardized pixel matrix".into(),
        ));
    }
    let latents = encode_all(net, m.data().view())?;
    let (ny, nx) = m.image_shape();
    latents
        .axis_iter(Axis(1))
        .map(|col| unflatten(col, ny, nx))
        .collect()
}
