//! Truncated PCA of a standardized pixel matrix.
//!
//! The right singular vectors of `S` (pixels x frames) are the eigenvectors
//! of the `N_t x N_t` Gram matrix `S^T S`, and the singular values are the
//! square roots of its eigenvalues. Since `N_t` is small compared with the
//! pixel count, the Gram matrix is formed explicitly and diagonalized with
//! [`symmetric_eigen`]. Left singular vectors are never stored.

use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use crate::codec::{checked_u32, put_f64, put_u32, Reader};
use crate::error::{Error, Result};
use crate::image::unflatten;
use crate::jacobi::{symmetric_eigen, JACOBI_MAX_SWEEPS, JACOBI_TOL};
use crate::sequence::PixelMatrix;

pub const PCA_MAGIC: &[u8; 4] = b"PCA1";

/// Default number of retained components.
pub const DEFAULT_COMPONENTS: usize = 64;

/// Eigenvalues below this fraction of the largest are clamped to zero.
const EIGEN_CLAMP: f64 = 1e-12;

/// Rows per Gram accumulation block. Fixed so the reduction order does not
/// depend on the thread count.
const GRAM_BLOCK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    basis: Array2<f64>,
    singular_values: Array1<f64>,
}

impl PcaModel {
    /// Builds a model from explicit parts, enforcing the orthonormality,
    /// ordering and sign conventions.
    pub fn new(basis: Array2<f64>, singular_values: Array1<f64>) -> Result<Self> {
        let (nt, d) = basis.dim();
        if d == 0 || d > nt || singular_values.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "basis {nt}x{d} with {} singular values",
                singular_values.len()
            )));
        }
        if singular_values
            .iter()
            .any(|g| !(g.is_finite() && *g >= 0.0))
            || singular_values.windows(2).into_iter().any(|w| w[0] < w[1])
        {
            return Err(Error::InvalidInput(
                "singular values must be finite, non-negative and non-increasing".into(),
            ));
        }
        let gram = basis.t().dot(&basis);
        for ((i, j), g) in gram.indexed_iter() {
            let want = if i == j { 1.0 } else { 0.0 };
            if (g - want).abs() > 1e-8 {
                return Err(Error::InvalidInput(format!(
                    "basis columns {i} and {j} are not orthonormal (<v_i, v_j> = {g})"
                )));
            }
        }
        let mut basis = basis;
        canonicalize_signs(&mut basis);
        Ok(Self {
            basis,
            singular_values,
        })
    }

    /// `(N_t, d)`; column `k` is the `k+1`-th right singular vector.
    pub fn basis(&self) -> &Array2<f64> {
        &self.basis
    }

    pub fn singular_values(&self) -> &Array1<f64> {
        &self.singular_values
    }

    pub fn d(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n_frames(&self) -> usize {
        self.basis.nrows()
    }

    /// `gamma_k^2 / sum_i gamma_i^2` over the retained components.
    pub fn explained_variance_ratio(&self) -> Array1<f64> {
        let total: f64 = self.singular_values.iter().map(|g| g * g).sum();
        if total == 0.0 {
            return Array1::zeros(self.d());
        }
        self.singular_values.mapv(|g| g * g / total)
    }
}

/// Flips each column so that its largest-magnitude entry is positive; ties
/// go to the lowest index.
pub fn canonicalize_signs(basis: &mut Array2<f64>) {
    for mut col in basis.axis_iter_mut(Axis(1)) {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
}

/// `S^T S`, accumulated over fixed row blocks and summed in block order.
pub fn gram_matrix(data: &Array2<f64>) -> Array2<f64> {
    let nt = data.ncols();
    let partials: Vec<Array2<f64>> = data
        .axis_chunks_iter(Axis(0), GRAM_BLOCK)
        .into_par_iter()
        .map(|block| block.t().dot(&block))
        .collect();
    let mut gram = Array2::zeros((nt, nt));
    for p in &partials {
        gram += p;
    }
    // enforce exact symmetry
    for i in 0..nt {
        for j in i + 1..nt {
            let m = 0.5 * (gram[[i, j]] + gram[[j, i]]);
            gram[[i, j]] = m;
            gram[[j, i]] = m;
        }
    }
    gram
}

/// Keeps `d` within `1..=N_t`, warning when the request is capped.
pub fn cap_components(d: usize, n_frames: usize) -> usize {
    if d > n_frames {
        log::warn!("requested {d} components but only {n_frames} frames; using d = {n_frames}");
        n_frames
    } else {
        d
    }
}

pub fn fit_pca(m: &PixelMatrix, d: usize) -> Result<PcaModel> {
    if !m.is_standardized() {
        return Err(Error::InvalidInput(
            "PCA expects a standardized pixel matrix".into(),
        ));
    }
    let nt = m.n_frames();
    if d == 0 || d > nt {
        return Err(Error::OutOfRange { index: d, max: nt });
    }
    let gram = gram_matrix(m.data());
    let eig = symmetric_eigen(&gram, JACOBI_TOL, JACOBI_MAX_SWEEPS)?;
    let largest = eig.values[0].max(0.0);
    let singular_values = eig.values.slice(s![..d]).mapv(|l| {
        if l < EIGEN_CLAMP * largest {
            0.0
        } else {
            l.sqrt()
        }
    });
    let mut basis = eig.vectors.slice(s![.., ..d]).to_owned();
    canonicalize_signs(&mut basis);
    Ok(PcaModel {
        basis,
        singular_values,
    })
}

fn dot_sequential(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc + x * y)
}

fn check_frames(m: &PixelMatrix, model: &PcaModel) -> Result<()> {
    if m.n_frames() != model.n_frames() {
        return Err(Error::ShapeMismatch(format!(
            "matrix has {} frames, model was fitted on {}",
            m.n_frames(),
            model.n_frames()
        )));
    }
    Ok(())
}

/// Scores of every pixel on component `k` (0-based). Each score is an
/// in-order dot product so results do not depend on how rows are split.
fn component_scores(m: &PixelMatrix, model: &PcaModel, k: usize) -> Array1<f64> {
    let v = model.basis.column(k);
    let scores: Vec<f64> = m
        .data()
        .axis_iter(Axis(0))
        .into_par_iter()
        .map(|row| dot_sequential(row, v))
        .collect();
    Array1::from(scores)
}

/// Principal-component image `P_k = S v_k`, `k` counted from 1.
pub fn component_image(m: &PixelMatrix, model: &PcaModel, k: usize) -> Result<Array2<f64>> {
    check_frames(m, model)?;
    if k == 0 || k > model.d() {
        return Err(Error::OutOfRange {
            index: k,
            max: model.d(),
        });
    }
    let (ny, nx) = m.image_shape();
    unflatten(component_scores(m, model, k - 1).view(), ny, nx)
}

/// Per-pixel PCA latents, shape `(P, d)`: row `n` holds `<S_n, v_k>`.
pub fn project_latents(m: &PixelMatrix, model: &PcaModel) -> Result<Array2<f64>> {
    if !m.is_standardized() {
        return Err(Error::InvalidInput(
            "PCA latents need a standardized pixel matrix".into(),
        ));
    }
    check_frames(m, model)?;
    let mut out = Array2::zeros((m.n_pixels(), model.d()));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(m.data().axis_iter(Axis(0)))
        .for_each(|(mut z, row)| {
            for (k, v) in model.basis.axis_iter(Axis(1)).enumerate() {
                z[k] = dot_sequential(row, v);
            }
        });
    Ok(out)
}

/// Left singular vectors `S V Gamma^-1`; columns with zero singular value
/// are left at zero.
pub fn left_singular_vectors(m: &PixelMatrix, model: &PcaModel) -> Result<Array2<f64>> {
    let mut u = project_latents(m, model)?;
    for (mut col, &g) in u.axis_iter_mut(Axis(1)).zip(model.singular_values.iter()) {
        if g > 0.0 {
            col.mapv_inplace(|v| v / g);
        } else {
            col.fill(0.0);
        }
    }
    Ok(u)
}

pub fn encode_pca(model: &PcaModel) -> Result<Vec<u8>> {
    let (nt, d) = model.basis.dim();
    let mut buf = Vec::with_capacity(12 + 8 * d * (nt + 1));
    buf.extend_from_slice(PCA_MAGIC);
    put_u32(&mut buf, checked_u32(nt, "frame count")?);
    put_u32(&mut buf, checked_u32(d, "component count")?);
    for &g in model.singular_values.iter() {
        put_f64(&mut buf, g);
    }
    for col in model.basis.axis_iter(Axis(1)) {
        for &v in col.iter() {
            put_f64(&mut buf, v);
        }
    }
    Ok(buf)
}

pub fn decode_pca(bytes: &[u8]) -> Result<PcaModel> {
    let mut r = Reader::new(bytes, "PCA1");
    r.magic(PCA_MAGIC)?;
    let nt = r.u32()? as usize;
    let d = r.u32()? as usize;
    let gammas = r.f64_array(d)?;
    let flat = r.f64_array(nt * d)?;
    if r.remaining() != 0 {
        return Err(Error::format("PCA1", "trailing bytes after basis"));
    }
    if let Some(index) = gammas
        .iter()
        .chain(flat.iter())
        .position(|v| !v.is_finite())
    {
        return Err(Error::NonFinite { index });
    }
    // stored column-major
    let basis = Array2::from_shape_vec((d, nt), flat)
        .map_err(|e| Error::format("PCA1", e.to_string()))?
        .reversed_axes()
        .as_standard_layout()
        .into_owned();
    PcaModel::new(basis, Array1::from(gammas))
}

pub fn write_pca(model: &PcaModel, path: &Path) -> Result<()> {
    fs::write(path, encode_pca(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_pca(path: &Path) -> Result<PcaModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pca(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn standardized(data: Array2<f64>, shape: (usize, usize)) -> PixelMatrix {
        PixelMatrix::from_rows(data, shape, true).unwrap()
    }

    #[test]
    fn diagonal_matrix() {
        let m = standardized(array![[2.0, 0.0], [0.0, 1.0]], (1, 2));
        let model = fit_pca(&m, 2).unwrap();
        assert_eq!(model.singular_values().to_vec(), vec![2.0, 1.0]);
        assert_eq!(model.basis(), &array![[1.0, 0.0], [0.0, 1.0]]);
        let p1 = component_image(&m, &model, 1).unwrap();
        assert_eq!(p1, array![[2.0, 0.0]]);
        let z = project_latents(&m, &model).unwrap();
        assert_eq!(z.row(0).to_vec(), vec![2.0, 0.0]);
    }

    #[test]
    fn rank_one_matrix() {
        // S^T S = [[2,2],[2,2]] has eigenvalues 4 and 0 with eigenvectors
        // (1,1)/sqrt2 and (1,-1)/sqrt2
        let m = standardized(array![[1.0, 1.0], [1.0, 1.0]], (2, 1));
        let model = fit_pca(&m, 2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((model.singular_values()[0] - 2.0).abs() < 1e-14);
        assert_eq!(model.singular_values()[1], 0.0);
        assert!((model.basis()[[0, 0]] - h).abs() < 1e-14);
        assert!((model.basis()[[1, 0]] - h).abs() < 1e-14);
        // tie on |entry|: lowest index is made positive
        assert!((model.basis()[[0, 1]] - h).abs() < 1e-14);
        assert!((model.basis()[[1, 1]] + h).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_requests() {
        let m = standardized(array![[1.0, 2.0], [3.0, 4.0]], (2, 1));
        assert!(matches!(fit_pca(&m, 0), Err(Error::OutOfRange { .. })));
        assert!(matches!(fit_pca(&m, 3), Err(Error::OutOfRange { .. })));
        let raw = PixelMatrix::from_rows(array![[1.0, 2.0]], (1, 1), false).unwrap();
        assert!(fit_pca(&raw, 1).is_err());
        let model = fit_pca(&m, 2).unwrap();
        assert!(component_image(&m, &model, 3).is_err());
        assert!(component_image(&m, &model, 0).is_err());
        let other = standardized(array![[1.0, 2.0, 3.0]], (1, 1));
        assert!(project_latents(&other, &model).is_err());
    }

    #[test]
    fn capping_components() {
        assert_eq!(cap_components(64, 10), 10);
        assert_eq!(cap_components(4, 10), 4);
    }

    #[test]
    fn left_vectors_are_orthonormal() {
        let m = standardized(
            array![
                [1.0, 2.0, 0.5],
                [0.0, -1.0, 3.0],
                [2.0, 2.0, 2.0],
                [-1.0, 0.0, 1.0]
            ],
            (2, 2),
        );
        let model = fit_pca(&m, 3).unwrap();
        let u = left_singular_vectors(&m, &model).unwrap();
        let g = u.t().dot(&u);
        for ((i, j), v) in g.indexed_iter() {
            assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
        }
    }

    #[test]
    fn pca_file_roundtrip() {
        let m = standardized(
            array![
                [1.0, 2.0, 0.5],
                [0.0, -1.0, 3.0],
                [2.0, 2.0, 2.0],
                [-1.0, 0.0, 1.0]
            ],
            (2, 2),
        );
        let model = fit_pca(&m, 2).unwrap();
        let bytes = encode_pca(&model).unwrap();
        assert_eq!(bytes.len(), 12 + 8 * 2 + 8 * 6);
        assert_eq!(decode_pca(&bytes).unwrap(), model);
        assert!(matches!(
            decode_pca(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(
            decode_pca(b"PCA2...."),
            Err(Error::BadMagic { .. })
        ));
    }
}
