//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pgae::ae::{batch_loss, init_network, Layer, Network, NetworkConfig};
use pgae::pca::fit_pca;
use pgae::sequence::{standardize, PixelMatrix};

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_FLOOR: f64 = 1e-7;

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

/// Toy net with encoder widths `[4, 3, 2]` on 8-sample signals.
///
/// Biases are drawn at random instead of starting at zero: with zero biases
/// a sample whose hidden units all switch off yields an exactly zero latent,
/// which puts the next rectifier on its kink where central differences and
/// the subgradient legitimately disagree.
pub fn toy_network(seed: u64) -> Network {
    let net = init_network(&NetworkConfig::with_hidden(8, &[4, 3], 2, seed)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let layers = net
        .layers()
        .iter()
        .map(|l| Layer {
            weights: l.weights.clone(),
            bias: l.bias.mapv(|_| rng.random_range(-0.1..0.1)),
        })
        .collect();
    Network::from_layers(net.config().clone(), layers).unwrap()
}

fn with_param(net: &Network, layer: usize, idx: Param, value: f64) -> Network {
    let mut layers: Vec<Layer> = net.layers().to_vec();
    match idx {
        Param::Weight(r, c) => layers[layer].weights[[r, c]] = value,
        Param::Bias(r) => layers[layer].bias[r] = value,
    }
    Network::from_layers(net.config().clone(), layers).unwrap()
}

#[derive(Clone, Copy, Debug)]
pub enum Param {
    Weight(usize, usize),
    Bias(usize),
}

/// One compared parameter: analytic value, central difference, verdict.
#[derive(Debug)]
pub struct GradCheck {
    pub layer: usize,
    pub param: Param,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    pub fn ok(&self) -> bool {
        let diff = (self.analytic - self.numeric).abs();
        let scale = self.analytic.abs().max(self.numeric.abs());
        diff <= FD_ABS_FLOOR || diff <= FD_REL_TOL * scale
    }
}

/// Central finite differences of the batch loss for every parameter.
pub fn finite_difference_check(
    net: &Network,
    batch: &Array2<f64>,
    targets: &Array2<f64>,
    alpha: f64,
) -> Vec<GradCheck> {
    let (grads, _) = pgae::ae::backward(net, batch.view(), targets.view(), alpha).unwrap();
    let loss = |n: &Network| {
        batch_loss(n, batch.view(), targets.view(), alpha)
            .unwrap()
            .total
    };
    let mut out = Vec::new();
    for (li, layer) in net.layers().iter().enumerate() {
        let mut params: Vec<(Param, f64, f64)> = layer
            .weights
            .indexed_iter()
            .map(|((r, c), &w)| (Param::Weight(r, c), w, grads[li].weights[[r, c]]))
            .collect();
        params.extend(
            layer
                .bias
                .iter()
                .enumerate()
                .map(|(r, &b)| (Param::Bias(r), b, grads[li].bias[r])),
        );
        for (param, value, analytic) in params {
            let plus = loss(&with_param(net, li, param, value + FD_STEP));
            let minus = loss(&with_param(net, li, param, value - FD_STEP));
            out.push(GradCheck {
                layer: li,
                param,
                analytic,
                numeric: (plus - minus) / (2.0 * FD_STEP),
            });
        }
    }
    out
}

/// Toy-net gradient check for one seed: batch of 3 random signals and
/// random latent targets.
pub fn toy_gradient_check(seed: u64, alpha: f64) -> Vec<GradCheck> {
    let net = toy_network(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let batch = random_matrix(&mut rng, 3, 8);
    let targets = random_matrix(&mut rng, 3, 2);
    finite_difference_check(&net, &batch, &targets, alpha)
}

fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Largest-magnitude entry positive, earliest index on ties.
pub fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Dense eigen-decomposition of `S^T S` by nalgebra, sorted descending,
/// sign-canonicalized.
pub fn dense_pca(s: &Array2<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = to_nalgebra(s);
    let gram = m.transpose() * &m;
    let eig = nalgebra::SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            canonical_sign(&mut v);
            v
        })
        .collect();
    (values, vectors)
}

/// Worst eigenvalue and eigenvector deviations of Gram-Jacobi PCA from the
/// dense oracle on a standardized matrix.
#[derive(Debug, Default)]
pub struct PcaComparison {
    /// Relative error for eigenvalues above `1e-10 lambda_max`, error
    /// relative to `lambda_max` for the (numerically zero) rest.
    pub value_error: f64,
    /// Max abs entry difference over well-separated components.
    pub vector_error: f64,
    pub vectors_compared: usize,
}

pub fn compare_pca_with_oracle(raw: &Array2<f64>) -> PcaComparison {
    let (ny, nx) = (raw.nrows(), 1);
    let m = PixelMatrix::from_rows(raw.clone(), (ny, nx), false).unwrap();
    let (z, _) = standardize(&m).unwrap();
    let nt = z.n_frames();
    let model = fit_pca(&z, nt).unwrap();
    let (values, vectors) = dense_pca(z.data());
    let lmax = values[0].max(0.0);
    let mut cmp = PcaComparison::default();
    for k in 0..nt {
        let ours = model.singular_values()[k].powi(2);
        let oracle = values[k];
        let err = if oracle.abs() > 1e-10 * lmax {
            (ours - oracle).abs() / oracle.abs()
        } else {
            (ours - oracle).abs() / lmax.max(f64::MIN_POSITIVE)
        };
        cmp.value_error = cmp.value_error.max(err);

        let gap_lo = if k > 0 {
            values[k - 1] - oracle
        } else {
            f64::INFINITY
        };
        let gap_hi = if k + 1 < nt {
            oracle - values[k + 1]
        } else {
            f64::INFINITY
        };
        if oracle > 1e-10 * lmax && gap_lo.min(gap_hi) > 1e-3 * lmax {
            let col = model.basis().column(k);
            let diff = col
                .iter()
                .zip(&vectors[k])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            cmp.vector_error = cmp.vector_error.max(diff);
            cmp.vectors_compared += 1;
        }
    }
    cmp
}

/// Textbook triple loop.
pub fn naive_matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    assert_eq!(a.ncols(), b.nrows());
    let mut out = Array2::zeros((a.nrows(), b.ncols()));
    for i in 0..a.nrows() {
        for j in 0..b.ncols() {
            let mut s = 0.0;
            for k in 0..a.ncols() {
                s += a[[i, k]] * b[[k, j]];
            }
            out[[i, j]] = s;
        }
    }
    out
}

/// Slab bracket at Fourier number `fo` from the dual (image-source) series
/// `(pi fo)^(-1/2) sum_{m in Z} exp(-m^2 / fo)`, which converges fast where
/// the direct series is slow and shares no code with it.
pub fn bracket_image_series(fo: f64) -> f64 {
    let mut sum = 1.0;
    for m in 1..200 {
        let mf = m as f64;
        sum += 2.0 * (-mf * mf / fo).exp();
    }
    sum / (std::f64::consts::PI * fo).sqrt()
}

pub fn pearson(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}
