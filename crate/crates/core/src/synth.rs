//! Synthetic pulsed-thermography specimens.
//!
//! Every pixel column is an adiabatic slab heated by an instantaneous pulse
//! at `t = 0`. Sound pixels see the full plate thickness; pixels above a
//! defect see a slab ending at the defect depth, so heat stays trapped
//! near the surface. Columns do not exchange heat laterally. A smooth
//! bilinear gain field models uneven heating, and Gaussian noise is added
//! per sample.

use std::f64::consts::PI;

use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::ThermalSequence;

/// Series terms below this are dropped.
pub const SERIES_TERM_FLOOR: f64 = 1e-12;
pub const SERIES_MAX_TERMS: usize = 10_000;

/// Pixels closer than this (Chebyshev distance) to a defect are excluded
/// from the sound mask.
pub const SOUND_MARGIN_PX: usize = 2;

/// `1 + 2 sum_{n>=1} exp(-n^2 pi^2 Fo)`, truncated once a term drops below
/// [`SERIES_TERM_FLOOR`] or after `max_terms` terms.
pub fn slab_bracket(fourier: f64, max_terms: usize) -> f64 {
    let mut sum = 0.0;
    for n in 1..=max_terms {
        let nf = n as f64;
        let term = (-nf * nf * PI * PI * fourier).exp();
        if term < SERIES_TERM_FLOOR {
            break;
        }
        sum += term;
    }
    1.0 + 2.0 * sum
}

fn is_positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

/// Front-surface temperature rise of an adiabatic slab of thickness
/// `thickness_mm` at time `t_s` after absorbing `energy` per unit area:
/// `Q / (rho c L) * (1 + 2 sum exp(-n^2 pi^2 a t / L^2))`.
pub fn slab_surface_temp(
    thickness_mm: f64,
    diffusivity_mm2_s: f64,
    t_s: f64,
    energy: f64,
    heat_capacity: f64,
) -> Result<f64> {
    slab_surface_temp_with_cap(
        thickness_mm,
        diffusivity_mm2_s,
        t_s,
        energy,
        heat_capacity,
        SERIES_MAX_TERMS,
    )
}

pub fn slab_surface_temp_with_cap(
    thickness_mm: f64,
    diffusivity_mm2_s: f64,
    t_s: f64,
    energy: f64,
    heat_capacity: f64,
    max_terms: usize,
) -> Result<f64> {
    if !is_positive(thickness_mm) || !is_positive(diffusivity_mm2_s) {
        return Err(Error::InvalidInput(format!(
            "thickness ({thickness_mm}) and diffusivity ({diffusivity_mm2_s}) must be positive"
        )));
    }
    if t_s.is_nan() || t_s < 0.0 {
        return Err(Error::InvalidInput(format!(
            "time must be non-negative, got {t_s}"
        )));
    }
    if !is_positive(heat_capacity) {
        return Err(Error::InvalidInput(format!(
            "heat capacity must be positive, got {heat_capacity}"
        )));
    }
    let fourier = diffusivity_mm2_s * t_s / (thickness_mm * thickness_mm);
    Ok(energy / (heat_capacity * thickness_mm) * slab_bracket(fourier, max_terms))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    /// Covers `center - size/2 <= p < center + size/2` on each axis;
    /// `center` and `size` are `[y, x]` and `[height, width]`.
    Rect { center: [f64; 2], size: [f64; 2] },
    /// Covers pixels within `diameter / 2` of `center` (`[y, x]`).
    Circle { center: [f64; 2], diameter: f64 },
}

impl Shape {
    fn contains(&self, y: usize, x: usize) -> bool {
        let (yf, xf) = (y as f64, x as f64);
        match *self {
            Shape::Rect { center, size } => {
                yf >= center[0] - size[0] / 2.0
                    && yf < center[0] + size[0] / 2.0
                    && xf >= center[1] - size[1] / 2.0
                    && xf < center[1] + size[1] / 2.0
            }
            Shape::Circle { center, diameter } => {
                let r = diameter / 2.0;
                (yf - center[0]).powi(2) + (xf - center[1]).powi(2) <= r * r
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Defect {
    #[serde(flatten)]
    pub shape: Shape,
    pub depth_mm: f64,
}

/// Corner gains of the bilinear heating field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatingGain {
    pub top_left: f64,
    pub top_right: f64,
    pub bottom_left: f64,
    pub bottom_right: f64,
}

impl Default for HeatingGain {
    fn default() -> Self {
        Self {
            top_left: 1.0,
            top_right: 1.0,
            bottom_left: 1.0,
            bottom_right: 1.0,
        }
    }
}

impl HeatingGain {
    /// Gain rising linearly by `fraction` from the top-left to the
    /// bottom-right corner.
    pub fn diagonal(fraction: f64) -> Self {
        Self {
            top_left: 1.0,
            top_right: 1.0 + fraction / 2.0,
            bottom_left: 1.0 + fraction / 2.0,
            bottom_right: 1.0 + fraction,
        }
    }

    fn at(&self, y: usize, x: usize, height: usize, width: usize) -> f64 {
        let v = if height > 1 {
            y as f64 / (height - 1) as f64
        } else {
            0.0
        };
        let u = if width > 1 {
            x as f64 / (width - 1) as f64
        } else {
            0.0
        };
        let top = self.top_left * (1.0 - u) + self.top_right * u;
        let bottom = self.bottom_left * (1.0 - u) + self.bottom_right * u;
        top * (1.0 - v) + bottom * v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecimenSpec {
    pub plate_thickness_mm: f64,
    #[serde(default = "default_diffusivity")]
    pub thermal_diffusivity_mm2_per_s: f64,
    #[serde(default = "one")]
    pub absorbed_energy_per_area: f64,
    #[serde(default = "one")]
    pub volumetric_heat_capacity: f64,
    #[serde(default)]
    pub defects: Vec<Defect>,
    pub height: usize,
    pub width: usize,
    pub n_frames: usize,
    #[serde(default = "default_frame_rate")]
    pub frame_rate_hz: f64,
    /// Noise std as a fraction of the sound plateau `Q / (rho c L)`.
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub heating_gain: HeatingGain,
    #[serde(default)]
    pub seed: u64,
}

fn default_diffusivity() -> f64 {
    0.11
}

fn default_frame_rate() -> f64 {
    25.0
}

fn one() -> f64 {
    1.0
}

impl SpecimenSpec {
    /// 48x48 px, 128 frames at 25 Hz, 4 mm plate, four 8x8 px square
    /// defects at 0.5 / 1.0 / 1.5 / 2.0 mm, 1% noise and a 10% diagonal
    /// heating gradient, seed 7.
    pub fn standard() -> Self {
        let square = |cy: f64, cx: f64, depth_mm: f64| Defect {
            shape: Shape::Rect {
                center: [cy, cx],
                size: [8.0, 8.0],
            },
            depth_mm,
        };
        Self {
            plate_thickness_mm: 4.0,
            thermal_diffusivity_mm2_per_s: 0.11,
            absorbed_energy_per_area: 1.0,
            volumetric_heat_capacity: 1.0,
            defects: vec![
                square(12.0, 12.0, 0.5),
                square(12.0, 36.0, 1.0),
                square(36.0, 12.0, 1.5),
                square(36.0, 36.0, 2.0),
            ],
            height: 48,
            width: 48,
            n_frames: 128,
            frame_rate_hz: 25.0,
            noise_std: 0.01,
            heating_gain: HeatingGain::diagonal(0.10),
            seed: 7,
        }
    }

    /// Acquisition time of frame `k`: one frame period per step, the
    /// first frame one period after the pulse.
    pub fn frame_time(&self, k: usize) -> f64 {
        (k + 1) as f64 / self.frame_rate_hz
    }

    fn defect_masks(&self) -> Vec<Array2<bool>> {
        self.defects
            .iter()
            .map(|d| {
                Array2::from_shape_fn((self.height, self.width), |(y, x)| d.shape.contains(y, x))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !is_positive(self.plate_thickness_mm) || !is_positive(self.thermal_diffusivity_mm2_per_s)
        {
            return bad("plate thickness and diffusivity must be positive".into());
        }
        if !is_positive(self.volumetric_heat_capacity) || !self.absorbed_energy_per_area.is_finite()
        {
            return bad("heat capacity must be positive and energy finite".into());
        }
        if self.height == 0 || self.width == 0 || self.n_frames < 2 {
            return bad(format!(
                "need a non-empty image and at least 2 frames, got {}x{}x{}",
                self.n_frames, self.height, self.width
            ));
        }
        if !(self.frame_rate_hz > 0.0 && self.frame_rate_hz.is_finite()) {
            return bad(format!(
                "frame rate must be positive, got {}",
                self.frame_rate_hz
            ));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!(
                "noise std must be non-negative, got {}",
                self.noise_std
            ));
        }
        let g = self.heating_gain;
        if [g.top_left, g.top_right, g.bottom_left, g.bottom_right]
            .iter()
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return bad("heating gains must be positive".into());
        }
        for (i, d) in self.defects.iter().enumerate() {
            if !(d.depth_mm > 0.0 && d.depth_mm < self.plate_thickness_mm) {
                return bad(format!(
                    "defect {} depth {} mm outside (0, {})",
                    i + 1,
                    d.depth_mm,
                    self.plate_thickness_mm
                ));
            }
        }
        let masks = self.defect_masks();
        for (i, m) in masks.iter().enumerate() {
            if !m.iter().any(|&b| b) {
                return bad(format!("defect {} covers no pixels", i + 1));
            }
            for (j, other) in masks.iter().enumerate().skip(i + 1) {
                if m.iter().zip(other.iter()).any(|(&a, &b)| a && b) {
                    return bad(format!("defects {} and {} overlap", i + 1, j + 1));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectTruth {
    pub label: String,
    pub depth_mm: f64,
    pub pixels: usize,
    /// `[y0, x0, y1, x1]`, inclusive.
    pub bbox: [usize; 4],
    #[serde(skip)]
    pub mask: Array2<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub defect_mask: Array2<bool>,
    pub defects: Vec<DefectTruth>,
    pub sound_mask: Array2<bool>,
}

#[derive(Serialize)]
struct GroundTruthJson<'a> {
    height: usize,
    width: usize,
    defect_pixels: usize,
    sound_pixels: usize,
    sound_margin_px: usize,
    defects: &'a [DefectTruth],
}

impl GroundTruth {
    pub fn to_json(&self) -> Result<String> {
        let (height, width) = self.defect_mask.dim();
        let doc = GroundTruthJson {
            height,
            width,
            defect_pixels: self.defect_mask.iter().filter(|&&b| b).count(),
            sound_pixels: self.sound_mask.iter().filter(|&&b| b).count(),
            sound_margin_px: SOUND_MARGIN_PX,
            defects: &self.defects,
        };
        serde_json::to_string_pretty(&doc).map_err(|source| Error::Json {
            context: "ground truth".into(),
            source,
        })
    }
}

/// Complement of `defect` dilated by `margin` pixels (Chebyshev distance).
pub fn sound_mask(defect: &Array2<bool>, margin: usize) -> Array2<bool> {
    let (h, w) = defect.dim();
    let mut near = Array2::from_elem((h, w), false);
    for ((y, x), &d) in defect.indexed_iter() {
        if !d {
            continue;
        }
        let (y0, y1) = (y.saturating_sub(margin), (y + margin).min(h - 1));
        let (x0, x1) = (x.saturating_sub(margin), (x + margin).min(w - 1));
        near.slice_mut(ndarray::s![y0..=y1, x0..=x1]).fill(true);
    }
    near.mapv(|b| !b)
}

fn bbox(mask: &Array2<bool>) -> [usize; 4] {
    let mut b = [usize::MAX, usize::MAX, 0, 0];
    for ((y, x), &v) in mask.indexed_iter() {
        if v {
            b[0] = b[0].min(y);
            b[1] = b[1].min(x);
            b[2] = b[2].max(y);
            b[3] = b[3].max(x);
        }
    }
    b
}

/// Renders the specimen's frame stack and its ground-truth masks.
pub fn generate(spec: &SpecimenSpec) -> Result<(ThermalSequence, GroundTruth)> {
    spec.validate()?;
    let (nt, ny, nx) = (spec.n_frames, spec.height, spec.width);
    let curve = |thickness: f64| -> Result<Vec<f64>> {
        (0..nt)
            .map(|k| {
                slab_surface_temp(
                    thickness,
                    spec.thermal_diffusivity_mm2_per_s,
                    spec.frame_time(k),
                    spec.absorbed_energy_per_area,
                    spec.volumetric_heat_capacity,
                )
            })
            .collect()
    };
    let sound_curve = curve(spec.plate_thickness_mm)?;
    let defect_curves = spec
        .defects
        .iter()
        .map(|d| curve(d.depth_mm))
        .collect::<Result<Vec<_>>>()?;

    let masks = spec.defect_masks();
    // index into defect_curves per pixel, None for sound
    let owner = Array2::from_shape_fn((ny, nx), |(y, x)| masks.iter().position(|m| m[[y, x]]));
    let gain = Array2::from_shape_fn((ny, nx), |(y, x)| spec.heating_gain.at(y, x, ny, nx));

    let mut frames = Array3::zeros((nt, ny, nx));
    for ((k, y, x), v) in frames.indexed_iter_mut() {
        let c = match owner[[y, x]] {
            Some(i) => &defect_curves[i],
            None => &sound_curve,
        };
        *v = gain[[y, x]] * c[k];
    }
    if spec.noise_std > 0.0 {
        let plateau = spec.absorbed_energy_per_area
            / (spec.volumetric_heat_capacity * spec.plate_thickness_mm);
        let noise = Normal::new(0.0, spec.noise_std * plateau.abs())
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        // frames is in standard layout: iteration is frame, row, column
        for v in frames.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    }

    let defect_mask = owner.mapv(|o| o.is_some());
    let defects = spec
        .defects
        .iter()
        .zip(masks)
        .enumerate()
        .map(|(i, (d, mask))| DefectTruth {
            label: format!("defect_{}", i + 1),
            depth_mm: d.depth_mm,
            pixels: mask.iter().filter(|&&b| b).count(),
            bbox: bbox(&mask),
            mask,
        })
        .collect();
    let truth = GroundTruth {
        sound_mask: sound_mask(&defect_mask, SOUND_MARGIN_PX),
        defect_mask,
        defects,
    };
    Ok((ThermalSequence::new(frames, spec.frame_rate_hz)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain_spec() -> SpecimenSpec {
        SpecimenSpec {
            defects: vec![],
            noise_std: 0.0,
            heating_gain: HeatingGain::default(),
            height: 6,
            width: 5,
            n_frames: 20,
            ..SpecimenSpec::standard()
        }
    }

    #[test]
    fn late_time_plateau() {
        // Fourier number 0.11 * 200 / 4 = 5.5
        let t = slab_surface_temp(2.0, 0.11, 200.0, 3.0, 1.5).unwrap();
        assert!((t - 3.0 / (1.5 * 2.0)).abs() < 1e-9);
    }

    #[test]
    fn halving_thickness_doubles_plateau() {
        let thick = slab_surface_temp(4.0, 0.11, 1000.0, 1.0, 1.0).unwrap();
        let thin = slab_surface_temp(2.0, 0.11, 1000.0, 1.0, 1.0).unwrap();
        assert!((thin / thick - 2.0).abs() < 1e-9);
    }

    #[test]
    fn time_zero_uses_the_cap() {
        let t = slab_surface_temp(1.0, 1.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(t, 1.0 + 2.0 * SERIES_MAX_TERMS as f64);
    }

    #[test]
    fn rejects_non_physical_inputs() {
        assert!(slab_surface_temp(0.0, 0.1, 1.0, 1.0, 1.0).is_err());
        assert!(slab_surface_temp(1.0, -0.1, 1.0, 1.0, 1.0).is_err());
        assert!(slab_surface_temp(1.0, 0.1, -1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn homogeneous_specimen_has_identical_pixels() {
        let (seq, truth) = generate(&plain_spec()).unwrap();
        let f = seq.frames();
        for k in 0..seq.n_frames() {
            let v = f[[k, 0, 0]];
            assert!(f.index_axis(ndarray::Axis(0), k).iter().all(|&x| x == v));
        }
        assert!(truth.sound_mask.iter().all(|&b| b));
    }

    #[test]
    fn half_depth_defect_doubles_late_temperature() {
        let spec = SpecimenSpec {
            defects: vec![Defect {
                shape: Shape::Rect {
                    center: [3.0, 2.0],
                    size: [2.0, 2.0],
                },
                depth_mm: 1.0,
            }],
            plate_thickness_mm: 2.0,
            frame_rate_hz: 0.1, // t up to 200 s: Fourier number >> 1 for both
            ..plain_spec()
        };
        let (seq, truth) = generate(&spec).unwrap();
        let last = seq.n_frames() - 1;
        let d = seq.frames()[[last, 3, 2]];
        let s = seq.frames()[[last, 0, 0]];
        assert!(truth.defect_mask[[3, 2]]);
        assert!((d / s - 2.0).abs() < 1e-9);
    }

    #[test]
    fn masks_follow_geometry() {
        let spec = SpecimenSpec::standard();
        let (_, truth) = generate(&spec).unwrap();
        assert_eq!(truth.defects.len(), 4);
        for d in &truth.defects {
            assert_eq!(d.pixels, 64);
        }
        assert_eq!(truth.defects[0].bbox, [8, 8, 15, 15]);
        // 2 px margin around each 8x8 square leaves a 12x12 exclusion
        let excluded = truth.sound_mask.iter().filter(|&&b| !b).count();
        assert_eq!(excluded, 4 * 144);
        assert!(truth
            .defect_mask
            .iter()
            .zip(truth.sound_mask.iter())
            .all(|(&d, &s)| !(d && s)));
    }

    #[test]
    fn circle_membership() {
        let c = Shape::Circle {
            center: [5.0, 5.0],
            diameter: 4.0,
        };
        assert!(c.contains(5, 7));
        assert!(!c.contains(5, 8));
        assert!(!c.contains(7, 7));
    }

    #[test]
    fn invalid_specimens_are_rejected() {
        let mut spec = SpecimenSpec::standard();
        spec.defects[0].depth_mm = 4.0;
        assert!(generate(&spec).is_err());
        let mut spec = SpecimenSpec::standard();
        spec.defects[1].shape = Shape::Rect {
            center: [14.0, 14.0],
            size: [8.0, 8.0],
        };
        assert!(generate(&spec).is_err());
        let mut spec = SpecimenSpec::standard();
        spec.noise_std = -1.0;
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn generation_is_seeded() {
        let spec = SpecimenSpec {
            height: 10,
            width: 10,
            n_frames: 8,
            defects: vec![],
            ..SpecimenSpec::standard()
        };
        let (a, _) = generate(&spec).unwrap();
        let (b, _) = generate(&spec).unwrap();
        assert_eq!(a, b);
        let (c, _) = generate(&SpecimenSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = SpecimenSpec::standard();
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains(r#""shape":"rect""#));
        let back: SpecimenSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
