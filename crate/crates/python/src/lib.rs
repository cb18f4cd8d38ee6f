//! Python bindings for the `pgae` thermography toolkit.
//!
//! Arrays cross the boundary as nested lists so the module has no numpy
//! dependency; `numpy.asarray` converts them on the Python side.

use std::path::PathBuf;

use ndarray::{Array1, Array2, Array3};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use pgae::ae::{self, NetworkConfig, TrainConfig};
use pgae::metrics::{self, Normalization};
use pgae::{pca, sequence, synth};

fn py_err(e: pgae::Error) -> PyErr {
    let msg = format!("[{}] {e}", e.code());
    match e {
        pgae::Error::Io { .. } | pgae::Error::MissingFile { .. } => PyIOError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn to_array2(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    let nrows = rows.len();
    Array2::from_shape_vec((nrows, ncols), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_mask(rows: Vec<Vec<bool>>) -> PyResult<Array2<bool>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(
            "mask rows must all have the same length",
        ));
    }
    let nrows = rows.len();
    Array2::from_shape_vec((nrows, ncols), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_rows<T: Clone>(a: &Array2<T>) -> Vec<Vec<T>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

#[pyclass(name = "ThermalSequence", module = "pgae_py")]
struct PySequence {
    inner: sequence::ThermalSequence,
}

#[pymethods]
impl PySequence {
    /// Builds a sequence from `frames[k][y][x]`.
    #[new]
    fn new(frames: Vec<Vec<Vec<f64>>>, frame_rate_hz: f64) -> PyResult<Self> {
        let nt = frames.len();
        let ny = frames.first().map_or(0, Vec::len);
        let nx = frames.first().and_then(|f| f.first()).map_or(0, Vec::len);
        if frames
            .iter()
            .any(|f| f.len() != ny || f.iter().any(|r| r.len() != nx))
        {
            return Err(PyValueError::new_err("frames must all have the same shape"));
        }
        let flat: Vec<f64> = frames.into_iter().flatten().flatten().collect();
        let arr = Array3::from_shape_vec((nt, ny, nx), flat)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let inner = sequence::ThermalSequence::new(arr, frame_rate_hz).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = sequence::load_sequence(&path).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        sequence::write_sequence(&self.inner, &path).map_err(py_err)
    }

    /// `(n_frames, height, width)`.
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (
            self.inner.n_frames(),
            self.inner.height(),
            self.inner.width(),
        )
    }

    #[getter]
    fn frame_rate_hz(&self) -> f64 {
        self.inner.frame_rate_hz()
    }

    fn frame(&self, k: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&self.inner.frame(k).map_err(py_err)?))
    }

    fn __repr__(&self) -> String {
        let (nt, ny, nx) = self.shape();
        format!("ThermalSequence(n_frames={nt}, height={ny}, width={nx})")
    }
}

/// Standardized pixel-by-time matrix.
#[pyclass(name = "PixelMatrix", module = "pgae_py")]
struct PyPixelMatrix {
    inner: sequence::PixelMatrix,
    dead_pixels: Vec<usize>,
}

#[pymethods]
impl PyPixelMatrix {
    /// `(n_pixels, n_frames)`.
    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.n_pixels(), self.inner.n_frames())
    }

    #[getter]
    fn image_shape(&self) -> (usize, usize) {
        self.inner.image_shape()
    }

    #[getter]
    fn dead_pixels(&self) -> Vec<usize> {
        self.dead_pixels.clone()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.data())
    }
}

#[pyclass(name = "PcaModel", module = "pgae_py")]
struct PyPcaModel {
    inner: pca::PcaModel,
}

#[pymethods]
impl PyPcaModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: pca::load_pca(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        pca::write_pca(&self.inner, &path).map_err(py_err)
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn singular_values(&self) -> Vec<f64> {
        self.inner.singular_values().to_vec()
    }

    #[getter]
    fn explained_variance_ratio(&self) -> Vec<f64> {
        self.inner.explained_variance_ratio().to_vec()
    }

    /// Basis as `(n_frames, d)` rows.
    fn basis(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.basis())
    }
}

#[pyclass(name = "Network", module = "pgae_py")]
struct PyNetwork {
    inner: ae::Network,
}

#[pymethods]
impl PyNetwork {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: ae::load_network(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        ae::write_network(&self.inner, &path).map_err(py_err)
    }

    #[getter]
    fn input_len(&self) -> usize {
        self.inner.input_len()
    }

    #[getter]
    fn latent_len(&self) -> usize {
        self.inner.latent_len()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    fn encode(&self, signal: Vec<f64>) -> PyResult<Vec<f64>> {
        let z = ae::encode(&self.inner, Array1::from(signal).view()).map_err(py_err)?;
        Ok(z.to_vec())
    }

    fn decode(&self, latent: Vec<f64>) -> PyResult<Vec<f64>> {
        let s = ae::decode(&self.inner, Array1::from(latent).view()).map_err(py_err)?;
        Ok(s.to_vec())
    }
}

#[pyclass(name = "TrainReport", module = "pgae_py", get_all)]
struct PyTrainReport {
    total_loss: Vec<f64>,
    reconstruction_loss: Vec<f64>,
    distillation_loss: Vec<f64>,
    initial_mean_cosine: f64,
    final_mean_cosine: f64,
    converged: bool,
    wall_clock_seconds: f64,
}

#[pymethods]
impl PyTrainReport {
    #[getter]
    fn epochs(&self) -> usize {
        self.total_loss.len()
    }
}

#[pyfunction]
fn load_sequence(path: PathBuf) -> PyResult<PySequence> {
    PySequence::load(path)
}

/// Flattens and standardizes every pixel signal.
#[pyfunction]
fn standardize(seq: &PySequence) -> PyResult<PyPixelMatrix> {
    let (inner, stats) =
        sequence::standardize(&sequence::reshape_raster(&seq.inner)).map_err(py_err)?;
    Ok(PyPixelMatrix {
        inner,
        dead_pixels: stats.dead_pixels,
    })
}

#[pyfunction]
#[pyo3(signature = (m, d=pca::DEFAULT_COMPONENTS))]
fn fit_pca(m: &PyPixelMatrix, d: usize) -> PyResult<PyPcaModel> {
    let d = pca::cap_components(d, m.inner.n_frames());
    Ok(PyPcaModel {
        inner: pca::fit_pca(&m.inner, d).map_err(py_err)?,
    })
}

/// Principal-component image `k`, counted from 1.
#[pyfunction]
fn component_image(m: &PyPixelMatrix, model: &PyPcaModel, k: usize) -> PyResult<Vec<Vec<f64>>> {
    Ok(to_rows(
        &pca::component_image(&m.inner, &model.inner, k).map_err(py_err)?,
    ))
}

/// Trains the autoencoder against the PCA scores of `m`.
#[pyfunction]
#[pyo3(signature = (
    m, model, alpha=1.0, seed=0, max_epochs=100, learning_rate=1e-4,
    batch_size=512, hidden=None,
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    m: &PyPixelMatrix,
    model: &PyPcaModel,
    alpha: f64,
    seed: u64,
    max_epochs: usize,
    learning_rate: f64,
    batch_size: usize,
    hidden: Option<Vec<usize>>,
) -> PyResult<(PyNetwork, PyTrainReport)> {
    let targets = pca::project_latents(&m.inner, &model.inner).map_err(py_err)?;
    let hidden = hidden.unwrap_or_else(|| ae::DEFAULT_HIDDEN.to_vec());
    let net_cfg = NetworkConfig::with_hidden(m.inner.n_frames(), &hidden, model.inner.d(), seed);
    let cfg = TrainConfig {
        learning_rate,
        batch_size,
        alpha,
        max_epochs,
        seed,
        ..TrainConfig::default()
    };
    let (net, report) = py
        .detach(|| ae::train(&m.inner, targets.view(), &net_cfg, &cfg))
        .map_err(py_err)?;
    Ok((
        PyNetwork { inner: net },
        PyTrainReport {
            total_loss: report.total_loss,
            reconstruction_loss: report.reconstruction_loss,
            distillation_loss: report.distillation_loss,
            initial_mean_cosine: report.initial_mean_cosine,
            final_mean_cosine: report.final_mean_cosine,
            converged: report.converged,
            wall_clock_seconds: report.wall_clock_seconds,
        },
    ))
}

/// Latent images, each min-max normalized to `[0, 1]`.
#[pyfunction]
fn latent_images(net: &PyNetwork, m: &PyPixelMatrix) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let imgs = ae::latent_images(&net.inner, &m.inner).map_err(py_err)?;
    Ok(imgs.iter().map(to_rows).collect())
}

fn normalization(raw: bool) -> Normalization {
    if raw {
        Normalization::Raw
    } else {
        Normalization::MinMax
    }
}

#[pyfunction]
#[pyo3(signature = (img, defect, sound, raw=false))]
fn contrast(
    img: Vec<Vec<f64>>,
    defect: Vec<Vec<bool>>,
    sound: Vec<Vec<bool>>,
    raw: bool,
) -> PyResult<f64> {
    metrics::contrast_with(
        &to_array2(img)?,
        &to_mask(defect)?,
        &to_mask(sound)?,
        normalization(raw),
    )
    .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (img, defect, sound, raw=false))]
fn snr_db(
    img: Vec<Vec<f64>>,
    defect: Vec<Vec<bool>>,
    sound: Vec<Vec<bool>>,
    raw: bool,
) -> PyResult<f64> {
    metrics::snr_db_with(
        &to_array2(img)?,
        &to_mask(defect)?,
        &to_mask(sound)?,
        normalization(raw),
    )
    .map_err(py_err)
}

#[pyfunction]
fn iou(pred: Vec<Vec<bool>>, truth: Vec<Vec<bool>>) -> PyResult<f64> {
    metrics::iou(&to_mask(pred)?, &to_mask(truth)?).map_err(py_err)
}

#[pyfunction]
fn loss_kd(z: Vec<f64>, target: Vec<f64>) -> PyResult<f64> {
    ae::loss_kd(Array1::from(z).view(), Array1::from(target).view()).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (thickness_mm, diffusivity_mm2_s, t_s, energy=1.0, heat_capacity=1.0))]
fn slab_surface_temp(
    thickness_mm: f64,
    diffusivity_mm2_s: f64,
    t_s: f64,
    energy: f64,
    heat_capacity: f64,
) -> PyResult<f64> {
    synth::slab_surface_temp(thickness_mm, diffusivity_mm2_s, t_s, energy, heat_capacity)
        .map_err(py_err)
}

/// Renders a specimen from its JSON description, or the standard specimen
/// when `spec_json` is omitted. Returns the sequence, one mask per defect
/// and the sound mask.
#[pyfunction]
#[pyo3(signature = (spec_json=None))]
#[allow(clippy::type_complexity)]
fn synthesize(
    spec_json: Option<&str>,
) -> PyResult<(PySequence, Vec<Vec<Vec<bool>>>, Vec<Vec<bool>>)> {
    let spec = match spec_json {
        Some(text) => {
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?
        }
        None => synth::SpecimenSpec::standard(),
    };
    let (seq, truth) = synth::generate(&spec).map_err(py_err)?;
    let defects = truth.defects.iter().map(|d| to_rows(&d.mask)).collect();
    Ok((
        PySequence { inner: seq },
        defects,
        to_rows(&truth.sound_mask),
    ))
}

#[pymodule]
fn pgae_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySequence>()?;
    m.add_class::<PyPixelMatrix>()?;
    m.add_class::<PyPcaModel>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyTrainReport>()?;
    m.add_function(wrap_pyfunction!(load_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(standardize, m)?)?;
    m.add_function(wrap_pyfunction!(fit_pca, m)?)?;
    m.add_function(wrap_pyfunction!(component_image, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(latent_images, m)?)?;
    m.add_function(wrap_pyfunction!(contrast, m)?)?;
    m.add_function(wrap_pyfunction!(snr_db, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(loss_kd, m)?)?;
    m.add_function(wrap_pyfunction!(slab_surface_temp, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    Ok(())
}
