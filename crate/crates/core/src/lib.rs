//! PCA-guided autoencoder for active infrared thermography.
//!
//! Frame stacks are flattened to a pixel-by-time matrix, standardized per
//! pixel, compressed with PCA, and then distilled into a small MLP
//! autoencoder whose latent space is pulled toward the PCA scores.

pub mod ae;
pub mod cli;
mod codec;
pub mod error;
pub mod image;
pub mod jacobi;
pub mod metrics;
pub mod pca;
pub mod sequence;
pub mod synth;

pub use error::{Error, Result};
pub use pca::PcaModel;
pub use sequence::{PixelMatrix, StandardizationStats, ThermalSequence};
