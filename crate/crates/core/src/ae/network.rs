//! Fully-connected encoder/decoder and its binary persistence.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{checked_u32, put_f64, put_u32, Reader};
use crate::error::{Error, Result};

pub const PGAE_MAGIC: &[u8; 4] = b"PGAE";
pub const PGAE_VERSION: u32 = 1;

/// Hidden widths placed before the latent layer by [`NetworkConfig::new`].
pub const DEFAULT_HIDDEN: [usize; 2] = [256, 128];
pub const DEFAULT_LATENT: usize = 64;

/// Layer widths of the autoencoder.
///
/// The encoder maps `input_len` through `encoder_widths` (the last entry is
/// the latent size `d`); the decoder maps `d` through `decoder_widths` (the
/// last entry is `input_len`). Hidden layers use a rectifier, the latent
/// and output layers are linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_len: usize,
    pub encoder_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    pub seed: u64,
}

impl NetworkConfig {
    /// Default three-layer encoder `[256, 128, d]` and its mirror decoder
    /// `[128, 256, input_len]`.
    pub fn new(input_len: usize, latent: usize, seed: u64) -> Self {
        Self::with_hidden(input_len, &DEFAULT_HIDDEN, latent, seed)
    }

    /// Encoder `hidden ++ [latent]`, decoder `reverse(hidden) ++ [input_len]`.
    pub fn with_hidden(input_len: usize, hidden: &[usize], latent: usize, seed: u64) -> Self {
        let mut encoder_widths = hidden.to_vec();
        encoder_widths.push(latent);
        let mut decoder_widths: Vec<usize> = hidden.iter().rev().copied().collect();
        decoder_widths.push(input_len);
        Self {
            input_len,
            encoder_widths,
            decoder_widths,
            seed,
        }
    }

    pub fn latent_len(&self) -> usize {
        self.encoder_widths.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 {
            return Err(Error::InvalidInput("input length must be positive".into()));
        }
        if self.encoder_widths.is_empty() || self.decoder_widths.is_empty() {
            return Err(Error::InvalidInput(
                "encoder and decoder need at least one layer each".into(),
            ));
        }
        if self
            .encoder_widths
            .iter()
            .chain(&self.decoder_widths)
            .any(|&w| w == 0)
        {
            return Err(Error::InvalidInput("layer widths must be positive".into()));
        }
        if self.decoder_widths.last() != Some(&self.input_len) {
            return Err(Error::InvalidInput(format!(
                "decoder must end in the input length {}, got {:?}",
                self.input_len, self.decoder_widths
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every layer, encoder first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut fan_in = self.input_len;
        for &w in self.encoder_widths.iter().chain(&self.decoder_widths) {
            shapes.push((fan_in, w));
            fan_in = w;
        }
        shapes
    }
}

/// One affine layer `y = W x + b`, with `W` stored `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }

    fn same_shape(&self, other: &Layer) -> bool {
        self.weights.dim() == other.weights.dim() && self.bias.len() == other.bias.len()
    }
}

/// Encoder `f_theta` followed by decoder `g_phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    layers: Vec<Layer>,
}

impl Network {
    /// Assembles a network from explicit layers, checking that their shapes
    /// follow `config`.
    pub fn from_layers(config: NetworkConfig, layers: Vec<Layer>) -> Result<Self> {
        config.validate()?;
        let shapes = config.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "config describes {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (i, (layer, &(fan_in, fan_out))) in layers.iter().zip(&shapes).enumerate() {
            if layer.weights.dim() != (fan_out, fan_in) || layer.bias.len() != fan_out {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i}: expected {fan_out}x{fan_in} weights, got {:?}",
                    layer.weights.dim()
                )));
            }
            if layer
                .weights
                .iter()
                .chain(layer.bias.iter())
                .any(|v| !v.is_finite())
            {
                return Err(Error::InvalidInput(format!(
                    "layer {i} has non-finite parameters"
                )));
            }
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn encoder_len(&self) -> usize {
        self.config.encoder_widths.len()
    }

    pub fn latent_len(&self) -> usize {
        self.config.latent_len()
    }

    pub fn input_len(&self) -> usize {
        self.config.input_len
    }

    /// Whether layer `i` is followed by the rectifier.
    pub fn is_hidden(&self, i: usize) -> bool {
        i + 1 != self.encoder_len() && i + 1 != self.layers.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub(crate) fn zeros_like(&self) -> Vec<Layer> {
        self.layers
            .iter()
            .map(|l| Layer::zeros(l.fan_in(), l.fan_out()))
            .collect()
    }

    pub(crate) fn check_grads(&self, grads: &[Layer]) -> Result<()> {
        if grads.len() != self.layers.len()
            || grads
                .iter()
                .zip(&self.layers)
                .any(|(g, l)| !g.same_shape(l))
        {
            return Err(Error::ShapeMismatch(
                "gradient shapes do not match the network".into(),
            ));
        }
        Ok(())
    }

    /// Runs layers `range` over a batch (one sample per row).
    pub(crate) fn run_layers(
        &self,
        range: std::ops::Range<usize>,
        input: ArrayView2<'_, f64>,
    ) -> Array2<f64> {
        let mut act = input.to_owned();
        for i in range {
            let layer = &self.layers[i];
            let mut pre = act.dot(&layer.weights.t());
            pre += &layer.bias;
            if self.is_hidden(i) {
                pre.mapv_inplace(|v| v.max(0.0));
            }
            act = pre;
        }
        act
    }

    /// Encodes a batch `(N, N_t)` into latents `(N, d)`.
    pub fn encode_batch(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if batch.ncols() != self.input_len() {
            return Err(Error::ShapeMismatch(format!(
                "signals have {} samples, network expects {}",
                batch.ncols(),
                self.input_len()
            )));
        }
        Ok(self.run_layers(0..self.encoder_len(), batch))
    }

    /// Decodes latents `(N, d)` into reconstructions `(N, N_t)`.
    pub fn decode_batch(&self, latents: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if latents.ncols() != self.latent_len() {
            return Err(Error::ShapeMismatch(format!(
                "latents have {} entries, network expects {}",
                latents.ncols(),
                self.latent_len()
            )));
        }
        Ok(self.run_layers(self.encoder_len()..self.layers.len(), latents))
    }
}

/// Draws weights from `U(-sqrt(6 / fan_in), +sqrt(6 / fan_in))` with a
/// ChaCha8 stream seeded by `cfg.seed`; biases start at zero.
pub fn init_network(cfg: &NetworkConfig) -> Result<Network> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let layers = cfg
        .layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let bound = (6.0 / fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).unwrap();
            let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || dist.sample(&mut rng));
            Layer {
                weights,
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Network::from_layers(cfg.clone(), layers)
}

/// `z_n = f_theta(S_n)` for a single signal.
pub fn encode(net: &Network, signal: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let batch = signal.insert_axis(Axis(0));
    Ok(net.encode_batch(batch)?.row(0).to_owned())
}

/// Reconstruction `g_phi(z_n)` for a single latent vector.
pub fn decode(net: &Network, latent: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let batch = latent.insert_axis(Axis(0));
    Ok(net.decode_batch(batch)?.row(0).to_owned())
}

pub fn encode_network(net: &Network) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(PGAE_MAGIC);
    put_u32(&mut buf, PGAE_VERSION);
    put_u32(&mut buf, checked_u32(net.layers.len(), "layer count")?);
    for layer in &net.layers {
        put_u32(&mut buf, checked_u32(layer.fan_out(), "rows")?);
        put_u32(&mut buf, checked_u32(layer.fan_in(), "cols")?);
        for &w in layer.weights.iter() {
            put_f64(&mut buf, w);
        }
        for &b in layer.bias.iter() {
            put_f64(&mut buf, b);
        }
    }
    let trailer = serde_json::to_vec(&net.config).map_err(|source| Error::Json {
        context: "network config".into(),
        source,
    })?;
    buf.extend_from_slice(&trailer);
    Ok(buf)
}

pub fn decode_network(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader::new(bytes, "PGAE");
    r.magic(PGAE_MAGIC)?;
    let version = r.u32()?;
    if version != PGAE_VERSION {
        return Err(Error::UnsupportedVersion {
            format: "PGAE",
            version,
        });
    }
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let weights = r.f64_array(rows * cols)?;
        let bias = r.f64_array(rows)?;
        layers.push(Layer {
            weights: Array2::from_shape_vec((rows, cols), weights).unwrap(),
            bias: Array1::from(bias),
        });
    }
    let config: NetworkConfig = serde_json::from_slice(r.rest()).map_err(|source| Error::Json {
        context: "PGAE config trailer".into(),
        source,
    })?;
    Network::from_layers(config, layers)
}

pub fn write_network(net: &Network, path: &Path) -> Result<()> {
    fs::write(path, encode_network(net)?).map_err(|e| Error::io(path, e))
}

pub fn load_network(path: &Path) -> Result<Network> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_network(&bytes)
}
