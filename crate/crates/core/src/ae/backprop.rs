//! Analytic gradients of `L_rec + alpha * mean(L_KD)` for a batch.

use ndarray::{Array2, ArrayView2, Axis};

use super::loss::{loss_kd_grad, loss_rec};
use super::network::{Layer, Network};
use crate::error::{Error, Result};

/// Loss terms of one batch, evaluated before the update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    pub total: f64,
    pub reconstruction: f64,
    pub distillation: f64,
}

/// Full-batch forward pass keeping every pre-activation.
struct Trace {
    /// `acts[i]` is the input of layer `i`; the last entry is the output.
    acts: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

fn forward(net: &Network, batch: ArrayView2<'_, f64>) -> Result<Trace> {
    let n_layers = net.layers().len();
    let mut acts = Vec::with_capacity(n_layers + 1);
    let mut pre = Vec::with_capacity(n_layers);
    acts.push(batch.to_owned());
    for (i, layer) in net.layers().iter().enumerate() {
        let mut p = acts[i].dot(&layer.weights.t());
        p += &layer.bias;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation { layer: i });
        }
        let a = if net.is_hidden(i) {
            p.mapv(|v| v.max(0.0))
        } else {
            p.clone()
        };
        pre.push(p);
        acts.push(a);
    }
    Ok(Trace { acts, pre })
}

/// Loss of a batch without gradients.
pub fn batch_loss(
    net: &Network,
    batch: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    alpha: f64,
) -> Result<BatchLoss> {
    check_shapes(net, batch, targets)?;
    let latents = net.encode_batch(batch)?;
    let recon = net.decode_batch(latents.view())?;
    let reconstruction = loss_rec(recon.view(), batch)?;
    let mut kd = 0.0;
    for (z, t) in latents.outer_iter().zip(targets.outer_iter()) {
        kd += super::loss::loss_kd(z, t)?;
    }
    let distillation = kd / batch.nrows() as f64;
    Ok(BatchLoss {
        total: super::loss::loss_total(reconstruction, distillation, alpha),
        reconstruction,
        distillation,
    })
}

fn check_shapes(
    net: &Network,
    batch: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
) -> Result<()> {
    if batch.nrows() == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if batch.ncols() != net.input_len() {
        return Err(Error::ShapeMismatch(format!(
            "batch signals have {} samples, network expects {}",
            batch.ncols(),
            net.input_len()
        )));
    }
    if targets.dim() != (batch.nrows(), net.latent_len()) {
        return Err(Error::ShapeMismatch(format!(
            "targets {:?} do not match batch of {} latents of size {}",
            targets.dim(),
            batch.nrows(),
            net.latent_len()
        )));
    }
    Ok(())
}

/// Gradients of the batch-mean total loss with respect to every weight and
/// bias, in layer order, together with the loss terms.
///
/// The rectifier derivative at exactly zero is taken as zero.
pub fn backward(
    net: &Network,
    batch: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    alpha: f64,
) -> Result<(Vec<Layer>, BatchLoss)> {
    check_shapes(net, batch, targets)?;
    let n = batch.nrows() as f64;
    let trace = forward(net, batch)?;
    let n_layers = net.layers().len();
    let enc = net.encoder_len();
    let recon = &trace.acts[n_layers];
    let latents = &trace.acts[enc];

    let reconstruction = loss_rec(recon.view(), batch)?;
    // d(rec)/d(recon) = 2 (recon - input) / N
    let mut upstream = (recon - &batch) * (2.0 / n);

    let mut kd_sum = 0.0;
    let mut kd_grad = Array2::zeros(latents.raw_dim());
    for ((z, t), mut g) in latents
        .outer_iter()
        .zip(targets.outer_iter())
        .zip(kd_grad.outer_iter_mut())
    {
        let (l, dz) = loss_kd_grad(z, t)?;
        kd_sum += l;
        g.assign(&dz);
    }
    let distillation = kd_sum / n;
    kd_grad *= alpha / n;

    let mut grads = net.zeros_like();
    for i in (0..n_layers).rev() {
        if i + 1 == enc {
            // upstream now holds dL/dz from the decoder; add the distillation term
            upstream += &kd_grad;
        }
        let mut delta = upstream;
        if net.is_hidden(i) {
            ndarray::Zip::from(&mut delta)
                .and(&trace.pre[i])
                .for_each(|d, &p| {
                    if p <= 0.0 {
                        *d = 0.0;
                    }
                });
        }
        grads[i].weights = delta.t().dot(&trace.acts[i]);
        grads[i].bias = delta.sum_axis(Axis(0));
        upstream = if i > 0 {
            delta.dot(&net.layers()[i].weights)
        } else {
            Array2::zeros((0, 0))
        };
    }

    let total = super::loss::loss_total(reconstruction, distillation, alpha);
    Ok((
        grads,
        BatchLoss {
            total,
            reconstruction,
            distillation,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ae::network::{init_network, NetworkConfig};
    use ndarray::array;

    #[test]
    fn zero_network_has_dead_first_layer() {
        let cfg = NetworkConfig::with_hidden(4, &[3], 2, 0);
        let layers = cfg
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| Layer::zeros(i, o))
            .collect();
        let net = Network::from_layers(cfg, layers).unwrap();
        let batch = array![[1.0, 2.0, -1.0, 0.5], [0.0, 1.0, 1.0, 3.0]];
        let targets = array![[1.0, 0.0], [0.0, 1.0]];
        let (g, loss) = backward(&net, batch.view(), targets.view(), 1.0).unwrap();
        assert!(g[0].weights.iter().all(|&v| v == 0.0));
        assert!(g[0].bias.iter().all(|&v| v == 0.0));
        // zero latents are degenerate: KD loss is 1 per sample
        assert_eq!(loss.distillation, 1.0);
    }

    #[test]
    fn loss_matches_forward_only_path() {
        let net = init_network(&NetworkConfig::with_hidden(6, &[5, 4], 3, 2)).unwrap();
        let batch = array![
            [0.1, -0.4, 1.0, 0.3, -0.2, 0.9],
            [1.0, 0.5, -0.5, 0.0, 0.2, 0.1]
        ];
        let targets = array![[1.0, 0.2, -0.3], [-0.5, 0.5, 2.0]];
        let (_, a) = backward(&net, batch.view(), targets.view(), 0.7).unwrap();
        let b = batch_loss(&net, batch.view(), targets.view(), 0.7).unwrap();
        assert!((a.total - b.total).abs() < 1e-12);
        assert!((a.reconstruction - b.reconstruction).abs() < 1e-12);
        assert!((a.distillation - b.distillation).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        let net = init_network(&NetworkConfig::with_hidden(3, &[2], 2, 0)).unwrap();
        let batch = array![[1.0, 2.0, 3.0]];
        assert!(backward(&net, batch.view(), array![[1.0]].view(), 1.0).is_err());
        assert!(backward(
            &net,
            Array2::zeros((0, 3)).view(),
            Array2::zeros((0, 2)).view(),
            1.0
        )
        .is_err());
    }

    #[test]
    fn non_finite_input_is_reported() {
        let net = init_network(&NetworkConfig::with_hidden(2, &[2], 1, 0)).unwrap();
        let batch = array![[f64::NAN, 0.0]];
        assert!(matches!(
            backward(&net, batch.view(), array![[1.0]].view(), 1.0),
            Err(Error::NonFiniteActivation { layer: 0 })
        ));
    }
}
