//! Reconstruction and cosine distillation losses.

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Norms below this make the cosine loss degenerate.
pub const NORM_FLOOR: f64 = 1e-12;

/// Batch mean of squared L2 reconstruction errors:
/// `(1/N) sum_n ||recon_n - input_n||^2`.
pub fn loss_rec(recon: ArrayView2<'_, f64>, input: ArrayView2<'_, f64>) -> Result<f64> {
    if recon.dim() != input.dim() {
        return Err(Error::ShapeMismatch(format!(
            "reconstruction {:?} vs input {:?}",
            recon.dim(),
            input.dim()
        )));
    }
    if recon.nrows() == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let ss: f64 = recon
        .iter()
        .zip(input.iter())
        .map(|(r, s)| (r - s) * (r - s))
        .sum();
    Ok(ss / recon.nrows() as f64)
}

fn check_len(z: &ArrayView1<'_, f64>, target: &ArrayView1<'_, f64>) -> Result<()> {
    if z.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "latent has {} entries, target {}",
            z.len(),
            target.len()
        )));
    }
    Ok(())
}

/// Cosine similarity, or `None` when either vector is (numerically) zero.
pub fn cosine(z: ArrayView1<'_, f64>, target: ArrayView1<'_, f64>) -> Option<f64> {
    let nz = z.dot(&z).sqrt();
    let nt = target.dot(&target).sqrt();
    if nz < NORM_FLOOR || nt < NORM_FLOOR {
        return None;
    }
    Some(z.dot(&target) / (nz * nt))
}

/// Distillation loss `1 - cos(z, z')`. Degenerate inputs give `1`.
pub fn loss_kd(z: ArrayView1<'_, f64>, target: ArrayView1<'_, f64>) -> Result<f64> {
    check_len(&z, &target)?;
    Ok(cosine(z, target).map_or(1.0, |c| 1.0 - c))
}

/// Loss value and its gradient with respect to `z`.
///
/// `dL/dz = -(z' / (|z| |z'|) - cos * z / |z|^2)`; zero at the degenerate
/// point.
pub fn loss_kd_grad(
    z: ArrayView1<'_, f64>,
    target: ArrayView1<'_, f64>,
) -> Result<(f64, Array1<f64>)> {
    check_len(&z, &target)?;
    let nz = z.dot(&z).sqrt();
    let nt = target.dot(&target).sqrt();
    if nz < NORM_FLOOR || nt < NORM_FLOOR {
        return Ok((1.0, Array1::zeros(z.len())));
    }
    let cos = z.dot(&target) / (nz * nt);
    let a = 1.0 / (nz * nt);
    let b = cos / (nz * nz);
    let grad = ndarray::Zip::from(&z)
        .and(&target)
        .map_collect(|&zi, &ti| -(a * ti - b * zi));
    Ok((1.0 - cos, grad))
}

/// `rec + alpha * kd_mean`.
pub fn loss_total(rec: f64, kd_mean: f64, alpha: f64) -> f64 {
    rec + alpha * kd_mean
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn reconstruction_examples() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(loss_rec(a.view(), a.view()).unwrap(), 0.0);
        let b = array![[2.0, 3.0], [3.0, 4.0]];
        assert_eq!(loss_rec(b.view(), a.view()).unwrap(), 1.0);
        let c = array![[3.0, 4.0], [3.0, 4.0]];
        // diffs scaled by 2 -> loss scaled by 4
        assert_eq!(loss_rec(c.view(), a.view()).unwrap(), 4.0);
        assert!(loss_rec(a.view(), array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn cosine_extremes() {
        let z = array![0.3, -1.2, 2.0];
        assert!(loss_kd(z.view(), z.view()).unwrap().abs() < 1e-12);
        let neg = z.mapv(|v| -v);
        assert!((loss_kd(z.view(), neg.view()).unwrap() - 2.0).abs() < 1e-12);
        let x = array![1.0, 0.0];
        let y = array![0.0, 3.0];
        assert_eq!(loss_kd(x.view(), y.view()).unwrap(), 1.0);
    }

    #[test]
    fn forty_five_degrees() {
        let v = loss_kd(array![1.0, 0.0].view(), array![1.0, 1.0].view()).unwrap();
        assert!((v - (1.0 - std::f64::consts::FRAC_1_SQRT_2)).abs() < 1e-15);
        assert!((v - 0.29289).abs() < 1e-5);
    }

    #[test]
    fn degenerate_latent_is_neutral() {
        let (l, g) = loss_kd_grad(array![0.0, 0.0].view(), array![1.0, 2.0].view()).unwrap();
        assert_eq!(l, 1.0);
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(loss_kd(array![1.0].view(), array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn total_loss_weighting() {
        assert_eq!(loss_total(1.0, 0.5, 1.0), 1.5);
        assert_eq!(loss_total(0.7, 0.9, 0.0), 0.7);
    }

    #[test]
    fn kd_gradient_matches_central_differences() {
        let z = array![0.4, -1.3, 0.8];
        let t = array![1.0, 0.5, -2.0];
        let (_, g) = loss_kd_grad(z.view(), t.view()).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut zp = z.clone();
            zp[i] += h;
            let mut zm = z.clone();
            zm[i] -= h;
            let fd = (loss_kd(zp.view(), t.view()).unwrap()
                - loss_kd(zm.view(), t.view()).unwrap())
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8, "{i}: {fd} vs {}", g[i]);
        }
    }
}
