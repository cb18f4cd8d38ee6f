use ndarray::Zip;

use super::network::{Layer, Network};
use crate::error::Result;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment accumulators mirroring the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Vec<Layer>,
    pub second: Vec<Layer>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        Self {
            first: net.zeros_like(),
            second: net.zeros_like(),
            step: 0,
            beta1: BETA1,
            beta2: BETA2,
            eps: ADAM_EPS,
        }
    }
}

/// One bias-corrected Adam update of every parameter, in place.
pub fn adam_step(net: &mut Network, grads: &[Layer], state: &mut AdamState, lr: f64) -> Result<()> {
    net.check_grads(grads)?;
    net.check_grads(&state.first)?;
    net.check_grads(&state.second)?;
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: &f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    for (((layer, g), m), v) in net
        .layers_mut()
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        Zip::from(&mut layer.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .and(&g.weights)
            .for_each(update);
        Zip::from(&mut layer.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .and(&g.bias)
            .for_each(update);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ae::network::NetworkConfig;
    use ndarray::array;

    fn scalar_net(w: f64) -> Network {
        // 1 -> 1 encoder, 1 -> 1 decoder
        let cfg = NetworkConfig {
            input_len: 1,
            encoder_widths: vec![1],
            decoder_widths: vec![1],
            seed: 0,
        };
        let layer = Layer {
            weights: array![[w]],
            bias: array![0.0],
        };
        Network::from_layers(cfg, vec![layer.clone(), layer]).unwrap()
    }

    fn grads(g: f64) -> Vec<Layer> {
        let l = Layer {
            weights: array![[g]],
            bias: array![0.0],
        };
        vec![l.clone(), l]
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let lr = 1e-4;
        let mut net = scalar_net(0.5);
        let mut state = AdamState::new(&net);
        adam_step(&mut net, &grads(1.0), &mut state, lr).unwrap();
        let delta = net.layers()[0].weights[[0, 0]] - 0.5;
        assert!((delta + lr).abs() < 1e-6 * lr);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = scalar_net(0.5);
        let before = net.clone();
        let mut state = AdamState::new(&net);
        adam_step(&mut net, &grads(0.0), &mut state, 1e-3).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn updates_are_deterministic() {
        let run = || {
            let mut net = scalar_net(0.25);
            let mut state = AdamState::new(&net);
            for g in [0.3, -1.2, 0.7] {
                adam_step(&mut net, &grads(g), &mut state, 1e-2).unwrap();
            }
            (net, state)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut net = scalar_net(0.5);
        let mut state = AdamState::new(&net);
        assert!(adam_step(&mut net, &grads(1.0)[..1], &mut state, 1e-3).is_err());
    }
}
