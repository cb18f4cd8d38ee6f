//! PCA-guided autoencoder: network, losses, gradients, optimizer and
//! training loop.

mod adam;
mod backprop;
mod loss;
mod network;
mod train;

pub use adam::{adam_step, AdamState, ADAM_EPS, BETA1, BETA2};
pub use backprop::{backward, batch_loss, BatchLoss};
pub use loss::{cosine, loss_kd, loss_kd_grad, loss_rec, loss_total, NORM_FLOOR};
pub use network::{
    decode, decode_network, encode, encode_network, init_network, load_network, write_network,
    Layer, Network, NetworkConfig, DEFAULT_HIDDEN, DEFAULT_LATENT, PGAE_MAGIC, PGAE_VERSION,
};
pub use train::{
    encode_all, latent_images, mean_cosine, raw_latent_images, train, train_from, TrainConfig,
    TrainReport,
};
