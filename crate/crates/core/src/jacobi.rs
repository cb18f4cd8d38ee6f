//! Cyclic Jacobi eigensolver for dense symmetric matrices.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Relative off-diagonal Frobenius tolerance.
pub const JACOBI_TOL: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues, non-increasing.
    pub values: Array1<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: Array2<f64>,
    pub sweeps: usize,
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j] * a[i * n + j];
            }
        }
    }
    s.sqrt()
}

/// Diagonalizes `matrix` with cyclic (row-by-row) Jacobi rotations until the
/// off-diagonal Frobenius norm drops below `tol * ||matrix||_F`.
///
/// Only the symmetric part is used; the input is not checked for symmetry.
pub fn symmetric_eigen(
    matrix: &Array2<f64>,
    tol: f64,
    max_sweeps: usize,
) -> Result<SymmetricEigen> {
    let (n, m) = matrix.dim();
    if n != m {
        return Err(Error::ShapeMismatch(format!(
            "eigen-decomposition needs a square matrix, got {n}x{m}"
        )));
    }
    let mut a: Vec<f64> = matrix.iter().copied().collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = tol * scale;

    let mut sweeps = 0;
    let mut residual = off_diagonal_norm(&a, n);
    while residual > threshold {
        if sweeps == max_sweeps {
            return Err(Error::NoConvergence { sweeps, residual });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // A <- A J
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                // A <- J^T A
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        residual = off_diagonal_norm(&a, n);
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal eigenvalues keep their diagonal order
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let values = Array1::from_iter(order.iter().map(|&i| a[i * n + i]));
    let mut vectors = Array2::zeros((n, n));
    for (col, &i) in order.iter().enumerate() {
        for k in 0..n {
            vectors[[k, col]] = v[k * n + i];
        }
    }
    Ok(SymmetricEigen {
        values,
        vectors,
        sweeps,
    })
}
