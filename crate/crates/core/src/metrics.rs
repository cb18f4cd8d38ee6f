//! Defect-visibility and segmentation metrics.
//!
//! Contrast and SNR compare the mean of a defect region with the mean of a
//! sound (defect-free) region. By default the image is first min-max
//! normalized to `[0, 1]`, which keeps the contrast ratio bounded for
//! images with negative values (standardized or latent images). SNR is
//! reported in decibels, `20 log10(|mean_D - mean_I| / sigma_I)`.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::min_max_normalize;

/// Below this the sound-region std is treated as zero.
pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    #[default]
    MinMax,
    /// Audit mode: metrics on raw pixel values.
    Raw,
}

fn prepare(img: &Array2<f64>, normalization: Normalization) -> Array2<f64> {
    match normalization {
        Normalization::MinMax => min_max_normalize(img),
        Normalization::Raw => img.clone(),
    }
}

fn check_region_masks(
    img: &Array2<f64>,
    defect: &Array2<bool>,
    sound: &Array2<bool>,
) -> Result<()> {
    for (name, mask) in [("defect", defect), ("sound", sound)] {
        if mask.dim() != img.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{name} mask {:?} vs image {:?}",
                mask.dim(),
                img.dim()
            )));
        }
        if !mask.iter().any(|&b| b) {
            return Err(Error::InvalidInput(format!("{name} mask is empty")));
        }
    }
    if defect.iter().zip(sound.iter()).any(|(&d, &s)| d && s) {
        return Err(Error::InvalidInput("defect and sound masks overlap".into()));
    }
    Ok(())
}

fn masked(img: &Array2<f64>, mask: &Array2<bool>) -> Vec<f64> {
    img.iter()
        .zip(mask.iter())
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

/// `(mean_D, mean_I)` after normalization.
pub fn region_means(
    img: &Array2<f64>,
    defect: &Array2<bool>,
    sound: &Array2<bool>,
    normalization: Normalization,
) -> Result<(f64, f64)> {
    check_region_masks(img, defect, sound)?;
    let img = prepare(img, normalization);
    Ok((mean(&masked(&img, defect)), mean(&masked(&img, sound))))
}

fn contrast_from_means(md: f64, mi: f64) -> f64 {
    let denom = md + mi;
    if denom == 0.0 {
        0.0
    } else {
        (md - mi).abs() / denom
    }
}

/// `|mean_D - mean_I| / (mean_D + mean_I)` on the min-max normalized image.
pub fn contrast(img: &Array2<f64>, defect: &Array2<bool>, sound: &Array2<bool>) -> Result<f64> {
    contrast_with(img, defect, sound, Normalization::MinMax)
}

pub fn contrast_with(
    img: &Array2<f64>,
    defect: &Array2<bool>,
    sound: &Array2<bool>,
    normalization: Normalization,
) -> Result<f64> {
    let (md, mi) = region_means(img, defect, sound, normalization)?;
    Ok(contrast_from_means(md, mi))
}

/// SNR in dB on the min-max normalized image. Returns negative infinity
/// when the region means coincide.
pub fn snr_db(img: &Array2<f64>, defect: &Array2<bool>, sound: &Array2<bool>) -> Result<f64> {
    snr_db_with(img, defect, sound, Normalization::MinMax)
}

pub fn snr_db_with(
    img: &Array2<f64>,
    defect: &Array2<bool>,
    sound: &Array2<bool>,
    normalization: Normalization,
) -> Result<f64> {
    check_region_masks(img, defect, sound)?;
    let img = prepare(img, normalization);
    let d = masked(&img, defect);
    let s = masked(&img, sound);
    if s.len() < 2 {
        return Err(Error::Degenerate(
            "sound region needs at least 2 pixels for a std".into(),
        ));
    }
    let sigma = sample_std(&s);
    if sigma < SIGMA_FLOOR {
        return Err(Error::Degenerate(format!(
            "sound region is uniform (std {sigma:e})"
        )));
    }
    Ok(20.0 * ((mean(&d) - mean(&s)).abs() / sigma).log10())
}

/// `|P & G| / |P | G|`; two empty masks agree perfectly.
pub fn iou(pred: &Array2<bool>, truth: &Array2<bool>) -> Result<f64> {
    if pred.dim() != truth.dim() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.dim(),
            truth.dim()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.iter().zip(truth.iter()) {
        inter += usize::from(p && g);
        union += usize::from(p || g);
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// 4-connected components, ordered by their first pixel in raster order.
pub fn connected_components(mask: &Array2<bool>) -> Vec<Array2<bool>> {
    let (h, w) = mask.dim();
    let mut label = Array2::<usize>::zeros((h, w));
    let mut comps = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask[[y, x]] || label[[y, x]] != 0 {
                continue;
            }
            let id = comps.len() + 1;
            let mut comp = Array2::from_elem((h, w), false);
            let mut stack = vec![(y, x)];
            label[[y, x]] = id;
            while let Some((cy, cx)) = stack.pop() {
                comp[[cy, cx]] = true;
                let mut push = |ny: usize, nx: usize| {
                    if mask[[ny, nx]] && label[[ny, nx]] == 0 {
                        label[[ny, nx]] = id;
                        stack.push((ny, nx));
                    }
                };
                if cy > 0 {
                    push(cy - 1, cx);
                }
                if cy + 1 < h {
                    push(cy + 1, cx);
                }
                if cx > 0 {
                    push(cy, cx - 1);
                }
                if cx + 1 < w {
                    push(cy, cx + 1);
                }
            }
            comps.push(comp);
        }
    }
    comps
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectMetrics {
    pub label: String,
    pub pixels: usize,
    pub contrast: f64,
    /// `None` when the SNR is degenerate (equal region means or a uniform
    /// sound region).
    pub snr_db: Option<f64>,
    pub snr_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub normalization: Normalization,
    pub defects: Vec<DefectMetrics>,
    pub mean_contrast: f64,
    /// Mean over non-degenerate defects.
    pub mean_snr_db: Option<f64>,
    pub iou: Option<f64>,
}

/// Per-defect contrast and SNR against a shared sound mask, plus means.
pub fn evaluate(
    img: &Array2<f64>,
    defects: &[(String, Array2<bool>)],
    sound: &Array2<bool>,
    normalization: Normalization,
) -> Result<MetricReport> {
    if defects.is_empty() {
        return Err(Error::InvalidInput("no defect regions given".into()));
    }
    let mut rows = Vec::with_capacity(defects.len());
    for (label, mask) in defects {
        let c = contrast_with(img, mask, sound, normalization)?;
        let snr = match snr_db_with(img, mask, sound, normalization) {
            Ok(v) if v.is_finite() => Some(v),
            Ok(_) | Err(Error::Degenerate(_)) => None,
            Err(e) => return Err(e),
        };
        let degenerate = snr.is_none();
        rows.push(DefectMetrics {
            label: label.clone(),
            pixels: mask.iter().filter(|&&b| b).count(),
            contrast: c,
            snr_db: snr,
            snr_degenerate: degenerate,
        });
    }
    let mean_contrast = rows.iter().map(|r| r.contrast).sum::<f64>() / rows.len() as f64;
    let snrs: Vec<f64> = rows.iter().filter_map(|r| r.snr_db).collect();
    let mean_snr_db = (!snrs.is_empty()).then(|| mean(&snrs));
    Ok(MetricReport {
        normalization,
        defects: rows,
        mean_contrast,
        mean_snr_db,
        iou: None,
    })
}

/// Axis-aligned rectangle in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Mask described as a union of rectangles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RectMask {
    pub height: usize,
    pub width: usize,
    pub rects: Vec<Rect>,
}

impl RectMask {
    pub fn to_mask(&self) -> Result<Array2<bool>> {
        let mut mask = Array2::from_elem((self.height, self.width), false);
        for r in &self.rects {
            if r.x + r.width > self.width || r.y + r.height > self.height {
                return Err(Error::InvalidInput(format!(
                    "rectangle {r:?} exceeds {}x{} mask",
                    self.height, self.width
                )));
            }
            mask.slice_mut(ndarray::s![r.y..r.y + r.height, r.x..r.x + r.width])
                .fill(true);
        }
        Ok(mask)
    }
}

/// Reads a mask from PGM (nonzero = set) or a JSON rectangle list,
/// chosen by file extension.
pub fn load_mask(path: &Path) -> Result<Array2<bool>> {
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rects: RectMask = serde_json::from_str(&text).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })?;
        rects.to_mask()
    } else {
        crate::image::read_mask(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Left column defect, right column sound.
    fn halves() -> (Array2<bool>, Array2<bool>) {
        let d = array![[true, false], [true, false]];
        let s = d.mapv(|b| !b);
        (d, s)
    }

    #[test]
    fn contrast_examples() {
        let (d, s) = halves();
        // min-max keeps 0 and 1 fixed: defect mean 0.75, sound mean 0.25
        let img = array![[1.0, 0.0], [0.5, 0.5]];
        assert!((contrast(&img, &d, &s).unwrap() - 0.5).abs() < 1e-15);
        let img = array![[1.0, 0.0], [1.0, 0.0]];
        assert_eq!(contrast(&img, &d, &s).unwrap(), 1.0);
        let img = array![[0.2, 0.0], [0.0, 0.2]];
        assert_eq!(contrast(&img, &d, &s).unwrap(), 0.0);
    }

    #[test]
    fn zero_denominator_gives_zero_contrast() {
        let (d, s) = halves();
        let img = array![[0.0, 0.0], [0.0, 0.0]];
        assert_eq!(
            contrast_with(&img, &d, &s, Normalization::Raw).unwrap(),
            0.0
        );
    }

    #[test]
    fn mask_validation() {
        let (d, s) = halves();
        let img = array![[1.0, 0.0], [0.5, 0.5]];
        assert!(contrast(&img, &d, &d).is_err());
        let empty = Array2::from_elem((2, 2), false);
        assert!(contrast(&img, &empty, &s).is_err());
        assert!(contrast(&img, &array![[true]], &s).is_err());
    }

    #[test]
    fn snr_example() {
        // defect mean 0.75; sound values 0.25 -/+ 0.025 have mean 0.25 and
        // sample std 0.025
        let defect = array![[true, true, false, false, false]];
        let sound = defect.mapv(|b| !b);
        let img = array![[1.0, 0.5, 0.225, 0.25, 0.275]];
        let raw = snr_db_with(&img, &defect, &sound, Normalization::Raw).unwrap();
        assert!((raw - 20.0 * 20.0f64.log10()).abs() < 1e-9);
        assert!((raw - 26.0206).abs() < 1e-3);
    }

    #[test]
    fn snr_degenerate_cases() {
        let (d, s) = halves();
        let flat_sound = array![[1.0, 0.3], [0.0, 0.3]];
        assert!(matches!(
            snr_db_with(&flat_sound, &d, &s, Normalization::Raw),
            Err(Error::Degenerate(_))
        ));
        let equal = array![[0.4, 0.3], [0.6, 0.7]];
        let v = snr_db_with(&equal, &d, &s, Normalization::Raw).unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
    }

    #[test]
    fn iou_examples() {
        let a = array![[true, true], [false, false]];
        let b = array![[false, false], [true, true]];
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
        let half = array![[true, false], [false, false]];
        assert_eq!(iou(&half, &a).unwrap(), 0.5);
        let empty = Array2::from_elem((2, 2), false);
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
        assert!(iou(&a, &array![[true]]).is_err());
    }

    #[test]
    fn components_split_in_raster_order() {
        let m = array![
            [false, true, false, true],
            [false, true, false, true],
            [true, false, false, false]
        ];
        let comps = connected_components(&m);
        assert_eq!(comps.len(), 3);
        assert!(comps[0][[0, 1]] && comps[0][[1, 1]]);
        assert!(comps[1][[0, 3]]);
        assert!(comps[2][[2, 0]]);
    }

    #[test]
    fn evaluate_reports_means() {
        let img = array![[1.0, 0.0, 0.1], [0.8, 0.05, 0.0]];
        let sound = array![[false, true, true], [false, true, true]];
        let defects = vec![
            (
                "a".to_string(),
                array![[true, false, false], [false, false, false]],
            ),
            (
                "b".to_string(),
                array![[false, false, false], [true, false, false]],
            ),
        ];
        let rep = evaluate(&img, &defects, &sound, Normalization::MinMax).unwrap();
        assert_eq!(rep.defects.len(), 2);
        let mean = (rep.defects[0].contrast + rep.defects[1].contrast) / 2.0;
        assert!((rep.mean_contrast - mean).abs() < 1e-15);
        assert!(rep.mean_snr_db.is_some());
    }

    #[test]
    fn rect_masks() {
        let r = RectMask {
            height: 3,
            width: 4,
            rects: vec![Rect {
                x: 1,
                y: 0,
                width: 2,
                height: 2,
            }],
        };
        let m = r.to_mask().unwrap();
        assert_eq!(m.iter().filter(|&&b| b).count(), 4);
        assert!(m[[0, 1]] && m[[1, 2]] && !m[[2, 1]]);
        let bad = RectMask {
            rects: vec![Rect {
                x: 3,
                y: 0,
                width: 2,
                height: 1,
            }],
            ..r
        };
        assert!(bad.to_mask().is_err());
    }
}
