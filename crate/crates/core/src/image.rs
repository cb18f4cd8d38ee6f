//! Scalar images, boolean masks and PGM (P2/P5) input/output.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// Raster-unflattens a length `height * width` vector into an image.
pub fn unflatten(values: ArrayView1<'_, f64>, height: usize, width: usize) -> Result<Array2<f64>> {
    if values.len() != height * width {
        return Err(Error::ShapeMismatch(format!(
            "{} values cannot form a {height}x{width} image",
            values.len()
        )));
    }
    Ok(Array2::from_shape_vec((height, width), values.to_vec()).unwrap())
}

/// Maps an image onto `[0, 1]` by its own minimum and maximum.
///
/// A constant image maps to all `0.5`.
pub fn min_max_normalize(img: &Array2<f64>) -> Array2<f64> {
    let (lo, hi) = img
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    if span.is_nan() || span <= 0.0 {
        return Array2::from_elem(img.raw_dim(), 0.5);
    }
    img.mapv(|v| (v - lo) / span)
}

/// A decoded PGM file. Samples keep their stored integer values.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub maxval: u16,
    pub pixels: Array2<u16>,
}

impl Pgm {
    /// Samples scaled to `[0, 1]` by `maxval`.
    pub fn to_unit(&self) -> Array2<f64> {
        let max = f64::from(self.maxval);
        self.pixels.mapv(|p| f64::from(p) / max)
    }

    /// Nonzero samples are `true`.
    pub fn to_mask(&self) -> Array2<bool> {
        self.pixels.mapv(|p| p != 0)
    }
}

/// Quantizes a `[0, 1]` image to 16 bits and encodes it as binary P5.
pub fn encode_pgm16(img: &Array2<f64>) -> Vec<u8> {
    let (h, w) = img.dim();
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    out.reserve(h * w * 2);
    for &v in img.iter() {
        let q = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

/// Encodes a mask as 8-bit P5 with `255` for set pixels.
pub fn encode_mask_pgm(mask: &Array2<bool>) -> Vec<u8> {
    let (h, w) = mask.dim();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(mask.iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

/// Encodes 8/16-bit samples as ASCII P2.
pub fn encode_pgm_ascii(pgm: &Pgm) -> Vec<u8> {
    let (h, w) = pgm.pixels.dim();
    let mut out = format!("P2\n{w} {h}\n{}\n", pgm.maxval);
    for row in pgm.pixels.rows() {
        let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn write_pgm16(path: &Path, img: &Array2<f64>) -> Result<()> {
    fs::write(path, encode_pgm16(img)).map_err(|e| Error::io(path, e))
}

pub fn write_mask_pgm(path: &Path, mask: &Array2<bool>) -> Result<()> {
    fs::write(path, encode_mask_pgm(mask)).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn read_mask(path: &Path) -> Result<Array2<bool>> {
    Ok(read_pgm(path)?.to_mask())
}

struct HeaderTokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderTokens<'a> {
    fn next_token(&mut self) -> Result<&'a [u8]> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b'#') => {
                    while let Some(&c) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if c == b'\n' {
                            break;
                        }
                    }
                }
                Some(c) if c.is_ascii_whitespace() => self.pos += 1,
                Some(_) => break,
                None => return Err(Error::format("PGM", "unexpected end of header")),
            }
        }
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|c| !c.is_ascii_whitespace())
        {
            self.pos += 1;
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn next_usize(&mut self) -> Result<usize> {
        let tok = self.next_token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::format(
                    "PGM",
                    format!("expected integer, found {:?}", String::from_utf8_lossy(tok)),
                )
            })
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Pgm> {
    let mut tokens = HeaderTokens { bytes, pos: 0 };
    let magic = tokens.next_token()?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(Error::BadMagic {
                expected: "P2 or P5".into(),
                found: String::from_utf8_lossy(other).into_owned(),
            })
        }
    };
    let width = tokens.next_usize()?;
    let height = tokens.next_usize()?;
    let maxval = tokens.next_usize()?;
    if width == 0 || height == 0 {
        return Err(Error::format("PGM", "zero-sized image"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(
            "PGM",
            format!("maxval {maxval} out of range"),
        ));
    }
    let n = width * height;
    let mut samples = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = tokens.pos + 1;
        let wide = maxval > 255;
        let need = n * if wide { 2 } else { 1 };
        let raster = bytes.get(start..).unwrap_or(&[]);
        if raster.len() < need {
            return Err(Error::Truncated {
                expected: n,
                found: raster.len() / if wide { 2 } else { 1 },
            });
        }
        if wide {
            samples.extend(
                raster[..need]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]])),
            );
        } else {
            samples.extend(raster[..need].iter().map(|&b| u16::from(b)));
        }
    } else {
        for i in 0..n {
            let v = tokens.next_usize().map_err(|_| Error::Truncated {
                expected: n,
                found: i,
            })?;
            samples.push(v as u16);
        }
    }
    if let Some(&bad) = samples.iter().find(|&&s| usize::from(s) > maxval) {
        return Err(Error::format(
            "PGM",
            format!("sample {bad} exceeds maxval {maxval}"),
        ));
    }
    Ok(Pgm {
        maxval: maxval as u16,
        pixels: Array2::from_shape_vec((height, width), samples).unwrap(),
    })
}
