//! Thermographic frame stacks, raster flattening and per-pixel
//! standardization.
//!
//! A sequence of `N_t` frames of `N_y x N_x` pixels is flattened into a
//! [`PixelMatrix`] with one row per pixel (raster order, `n = y * N_x + x`)
//! and one column per frame. Standardization works row by row: each pixel's
//! temporal signal is centred on its own mean and scaled by its own sample
//! standard deviation.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView1, Axis};
use rayon::prelude::*;

use crate::codec::{checked_u32, put_f32, put_f64, put_u32, Reader};
use crate::error::{Error, Result};

pub const TSF_MAGIC: &[u8; 4] = b"TSF1";
pub const TSF_VERSION: u32 = 1;

/// Rows whose raw sample std falls below this are treated as dead pixels.
pub const DEAD_PIXEL_SIGMA: f64 = 1e-8;

/// A stack of thermograms, shape `(N_t, N_y, N_x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalSequence {
    frames: Array3<f64>,
    frame_rate_hz: f64,
}

impl ThermalSequence {
    pub fn new(frames: Array3<f64>, frame_rate_hz: f64) -> Result<Self> {
        let (nt, ny, nx) = frames.dim();
        if nt < 2 {
            return Err(Error::InvalidInput(format!(
                "a sequence needs at least 2 frames, got {nt}"
            )));
        }
        if ny == 0 || nx == 0 {
            return Err(Error::InvalidInput(format!("empty frame size {ny}x{nx}")));
        }
        if !(frame_rate_hz.is_finite() && frame_rate_hz > 0.0) {
            return Err(Error::InvalidInput(format!(
                "frame rate must be positive, got {frame_rate_hz}"
            )));
        }
        if let Some(index) = frames.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            frames,
            frame_rate_hz,
        })
    }

    pub fn frames(&self) -> &Array3<f64> {
        &self.frames
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }

    pub fn n_frames(&self) -> usize {
        self.frames.dim().0
    }

    pub fn height(&self) -> usize {
        self.frames.dim().1
    }

    pub fn width(&self) -> usize {
        self.frames.dim().2
    }

    /// Frame `k` (0-based) as an image.
    pub fn frame(&self, k: usize) -> Result<Array2<f64>> {
        if k >= self.n_frames() {
            return Err(Error::OutOfRange {
                index: k,
                max: self.n_frames().saturating_sub(1),
            });
        }
        Ok(self.frames.index_axis(Axis(0), k).to_owned())
    }
}

/// Pixel-wise temporal signals, shape `(P, N_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMatrix {
    data: Array2<f64>,
    image_shape: (usize, usize),
    standardized: bool,
}

impl PixelMatrix {
    /// Wraps an already laid out `(P, N_t)` matrix. `P` must equal
    /// `height * width`.
    pub fn from_rows(
        data: Array2<f64>,
        image_shape: (usize, usize),
        standardized: bool,
    ) -> Result<Self> {
        let (p, nt) = data.dim();
        if p != image_shape.0 * image_shape.1 || p == 0 {
            return Err(Error::ShapeMismatch(format!(
                "{p} rows do not match a {}x{} image",
                image_shape.0, image_shape.1
            )));
        }
        if nt == 0 {
            return Err(Error::InvalidInput("pixel signals have no samples".into()));
        }
        Ok(Self {
            data,
            image_shape,
            standardized,
        })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn n_pixels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.data.ncols()
    }

    /// `(N_y, N_x)` of the source images.
    pub fn image_shape(&self) -> (usize, usize) {
        self.image_shape
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn row(&self, n: usize) -> ArrayView1<'_, f64> {
        self.data.row(n)
    }

    /// Inverse of [`reshape_raster`].
    pub fn to_sequence(&self, frame_rate_hz: f64) -> Result<ThermalSequence> {
        let (ny, nx) = self.image_shape;
        let frames = self
            .data
            .t()
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((self.n_frames(), ny, nx))
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        ThermalSequence::new(frames, frame_rate_hz)
    }
}

/// Per-pixel temporal statistics recorded by [`standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationStats {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub dead_pixels: Vec<usize>,
}

impl StandardizationStats {
    /// Undoes standardization row by row (`z * sigma + mu`).
    pub fn destandardize(&self, m: &PixelMatrix) -> Result<PixelMatrix> {
        if m.n_pixels() != self.mu.len() {
            return Err(Error::ShapeMismatch(format!(
                "stats cover {} pixels, matrix has {}",
                self.mu.len(),
                m.n_pixels()
            )));
        }
        let mut data = m.data.clone();
        for (n, mut row) in data.axis_iter_mut(Axis(0)).enumerate() {
            let (mu, sigma) = (self.mu[n], self.sigma[n]);
            row.mapv_inplace(|z| z * sigma + mu);
        }
        PixelMatrix::from_rows(data, m.image_shape, false)
    }
}

/// Flattens a sequence into one row per pixel, raster order.
pub fn reshape_raster(seq: &ThermalSequence) -> PixelMatrix {
    let (nt, ny, nx) = seq.frames.dim();
    let data = seq
        .frames
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((nt, ny * nx))
        .expect("standard layout reshapes");
    PixelMatrix {
        data: data.t().as_standard_layout().into_owned(),
        image_shape: (ny, nx),
        standardized: false,
    }
}

fn row_stats(row: ArrayView1<'_, f64>) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let ss: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Centres and scales every pixel signal by its own temporal mean and
/// sample (`N_t - 1`) standard deviation. Rows with `sigma < 1e-8` are
/// zeroed and listed as dead pixels.
pub fn standardize(m: &PixelMatrix) -> Result<(PixelMatrix, StandardizationStats)> {
    if m.standardized {
        return Err(Error::InvalidInput("matrix is already standardized".into()));
    }
    if m.n_frames() < 2 {
        return Err(Error::InvalidInput(format!(
            "sample std needs at least 2 frames, got {}",
            m.n_frames()
        )));
    }
    let mut data = m.data.clone();
    let stats: Vec<(f64, f64)> = data
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .map(|mut row| {
            let (mu, sigma) = row_stats(row.view());
            if sigma < DEAD_PIXEL_SIGMA {
                row.fill(0.0);
            } else {
                row.mapv_inplace(|v| (v - mu) / sigma);
            }
            (mu, sigma)
        })
        .collect();
    let dead_pixels = stats
        .iter()
        .enumerate()
        .filter(|(_, (_, s))| *s < DEAD_PIXEL_SIGMA)
        .map(|(n, _)| n)
        .collect();
    let (mu, sigma) = stats.into_iter().unzip();
    Ok((
        PixelMatrix {
            data,
            image_shape: m.image_shape,
            standardized: true,
        },
        StandardizationStats {
            mu,
            sigma,
            dead_pixels,
        },
    ))
}

pub fn encode_tsf(seq: &ThermalSequence) -> Result<Vec<u8>> {
    let (nt, ny, nx) = seq.frames.dim();
    let mut buf = Vec::with_capacity(28 + nt * ny * nx * 4);
    buf.extend_from_slice(TSF_MAGIC);
    put_u32(&mut buf, TSF_VERSION);
    put_u32(&mut buf, checked_u32(nt, "frame count")?);
    put_u32(&mut buf, checked_u32(ny, "height")?);
    put_u32(&mut buf, checked_u32(nx, "width")?);
    put_f64(&mut buf, seq.frame_rate_hz);
    for &v in seq.frames.iter() {
        put_f32(&mut buf, v as f32);
    }
    Ok(buf)
}

pub fn decode_tsf(bytes: &[u8]) -> Result<ThermalSequence> {
    let mut r = Reader::new(bytes, "TSF");
    r.magic(TSF_MAGIC)?;
    let version = r.u32()?;
    if version != TSF_VERSION {
        return Err(Error::UnsupportedVersion {
            format: "TSF",
            version,
        });
    }
    let nt = r.u32()? as usize;
    let ny = r.u32()? as usize;
    let nx = r.u32()? as usize;
    let frame_rate_hz = r.f64()?;
    let n = nt
        .checked_mul(ny)
        .and_then(|v| v.checked_mul(nx))
        .ok_or_else(|| Error::format("TSF", "header dimensions overflow"))?;
    let samples = r.f32_array(n)?;
    if r.remaining() != 0 {
        return Err(Error::format(
            "TSF",
            format!("{} trailing bytes after payload", r.remaining()),
        ));
    }
    if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let frames = Array3::from_shape_vec((nt, ny, nx), samples.into_iter().map(f64::from).collect())
        .map_err(|e| Error::format("TSF", e.to_string()))?;
    ThermalSequence::new(frames, frame_rate_hz)
}

pub fn load_sequence(path: &Path) -> Result<ThermalSequence> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tsf(&bytes)
}

pub fn write_sequence(seq: &ThermalSequence, path: &Path) -> Result<()> {
    fs::write(path, encode_tsf(seq)?).map_err(|e| Error::io(path, e))
}
