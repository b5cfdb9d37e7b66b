//! Separable orthonormal 2-D discrete wavelet transform with periodic
//! boundaries.
//!
//! One analysis level filters every row and then every column of the current
//! approximation region with a low-pass `h` and high-pass
//! `g[n] = (-1)^n h[L-1-n]`, downsampling by two:
//!
//! ```text
//! low[i]  = sum_k h[k] x[(2i + k) mod N]
//! high[i] = sum_k g[k] x[(2i + k) mod N]
//! ```
//!
//! With periodic extension on dyadic sizes the transform is exactly
//! orthonormal, so the synthesis is the transpose of the analysis.
//!
//! Band naming, for a 2x2 Haar block `[[a, b], [c, d]]` (row-major, `b` is to
//! the right of `a`):
//!
//! | band | response | value |
//! |------|----------|-------|
//! | `Approx` | low x, low y | `(a + b + c + d) / 2` |
//! | `Horiz` | high x, low y | `(a - b + c - d) / 2` |
//! | `Vert` | low x, high y | `(a + b - c - d) / 2` |
//! | `Diag` | high x, high y | `(a - b - c + d) / 2` |
//!
//! Linear order of coefficients (the index domain used by groupings): the
//! approximation band at scale `J`, then for `j = J, J-1, .., 1` the bands
//! `Horiz`, `Vert`, `Diag` of scale `j`, each stored row-major. Scale `j`
//! bands have `(width >> j) x (height >> j)` coefficients.

use serde::{Deserialize, Serialize};

use crate::data::Image;
use crate::sparsity::SignificanceMap;
use crate::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filter {
    Haar,
    /// Daubechies filter with two vanishing moments (4 taps).
    Db2,
}

impl Filter {
    pub fn lowpass(self) -> Vec<f64> {
        match self {
            Filter::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            Filter::Db2 => {
                let s3 = 3f64.sqrt();
                let norm = 4.0 * std::f64::consts::SQRT_2;
                vec![
                    (1.0 + s3) / norm,
                    (3.0 + s3) / norm,
                    (3.0 - s3) / norm,
                    (1.0 - s3) / norm,
                ]
            }
        }
    }

    pub fn highpass(self) -> Vec<f64> {
        let h = self.lowpass();
        let n = h.len();
        (0..n)
            .map(|k| if k % 2 == 0 { h[n - 1 - k] } else { -h[n - 1 - k] })
            .collect()
    }
}

impl std::str::FromStr for Filter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(Filter::Haar),
            "db2" => Ok(Filter::Db2),
            other => Err(invalid(format!("unknown wavelet filter '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WaveletSpec {
    pub filter: Filter,
    pub levels: usize,
}

impl WaveletSpec {
    pub fn new(filter: Filter, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(invalid("wavelet depth must be at least 1"));
        }
        Ok(Self { filter, levels })
    }

    pub fn haar(levels: usize) -> Result<Self> {
        Self::new(Filter::Haar, levels)
    }

    pub fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        if self.levels == 0 || self.levels >= usize::BITS as usize {
            return Err(invalid(format!("invalid wavelet depth {}", self.levels)));
        }
        let step = 1usize << self.levels;
        if width == 0 || height == 0 || !width.is_multiple_of(step) || !height.is_multiple_of(step) {
            return Err(invalid(format!(
                "image {width}x{height} is not divisible by 2^{} = {step}",
                self.levels
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Approx,
    Horiz,
    Vert,
    Diag,
}

/// Position of one frame element: band, scale `j` in `[1, J]` and position
/// `(x, y)` inside that band's grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CoeffIndex {
    pub band: Band,
    pub scale: usize,
    pub x: usize,
    pub y: usize,
}

/// Location of a band inside the linear coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandLayout {
    pub band: Band,
    pub scale: usize,
    pub offset: usize,
    pub width: usize,
    pub height: usize,
}

/// Bands in linear order for a `width x height` image.
pub fn band_layout(spec: &WaveletSpec, width: usize, height: usize) -> Vec<BandLayout> {
    let levels = spec.levels;
    let mut out = Vec::with_capacity(1 + 3 * levels);
    let (aw, ah) = (width >> levels, height >> levels);
    out.push(BandLayout {
        band: Band::Approx,
        scale: levels,
        offset: 0,
        width: aw,
        height: ah,
    });
    let mut offset = aw * ah;
    for j in (1..=levels).rev() {
        let (bw, bh) = (width >> j, height >> j);
        for band in [Band::Horiz, Band::Vert, Band::Diag] {
            out.push(BandLayout {
                band,
                scale: j,
                offset,
                width: bw,
                height: bh,
            });
            offset += bw * bh;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoeffPyramid {
    pub spec: WaveletSpec,
    pub width: usize,
    pub height: usize,
    /// Coefficients in the documented linear order.
    pub coeffs: Vec<f64>,
}

impl CoeffPyramid {
    pub fn zeros(spec: WaveletSpec, width: usize, height: usize) -> Result<Self> {
        spec.check_dims(width, height)?;
        Ok(Self {
            spec,
            width,
            height,
            coeffs: vec![0.0; width * height],
        })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn layout(&self) -> Vec<BandLayout> {
        band_layout(&self.spec, self.width, self.height)
    }

    pub fn band(&self, band: Band, scale: usize) -> Option<&[f64]> {
        self.layout()
            .into_iter()
            .find(|b| b.band == band && b.scale == scale)
            .map(|b| &self.coeffs[b.offset..b.offset + b.width * b.height])
    }

    pub fn linear_index(&self, idx: CoeffIndex) -> Option<usize> {
        let b = self
            .layout()
            .into_iter()
            .find(|b| b.band == idx.band && b.scale == idx.scale)?;
        (idx.x < b.width && idx.y < b.height).then(|| b.offset + idx.y * b.width + idx.x)
    }

    pub fn coeff_index(&self, linear: usize) -> Option<CoeffIndex> {
        self.layout().into_iter().find_map(|b| {
            let n = b.width * b.height;
            (linear >= b.offset && linear < b.offset + n).then(|| {
                let r = linear - b.offset;
                CoeffIndex {
                    band: b.band,
                    scale: b.scale,
                    x: r % b.width,
                    y: r / b.width,
                }
            })
        })
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }
}

fn analyze_line(src: &[f64], dst: &mut [f64], h: &[f64], g: &[f64]) {
    let n = src.len();
    let half = n / 2;
    for i in 0..half {
        let (mut lo, mut hi) = (0.0, 0.0);
        for (k, (&hk, &gk)) in h.iter().zip(g).enumerate() {
            let x = src[(2 * i + k) % n];
            lo += hk * x;
            hi += gk * x;
        }
        dst[i] = lo;
        dst[half + i] = hi;
    }
}

fn synthesize_line(src: &[f64], dst: &mut [f64], h: &[f64], g: &[f64]) {
    let n = src.len();
    let half = n / 2;
    dst.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..half {
        let (lo, hi) = (src[i], src[half + i]);
        for (k, (&hk, &gk)) in h.iter().zip(g).enumerate() {
            dst[(2 * i + k) % n] += hk * lo + gk * hi;
        }
    }
}

/// Apply `f` to every row (first `cw` entries of the first `ch` rows) and then
/// every column of the top-left `cw x ch` region of a row-major buffer.
fn filter_region(
    buf: &mut [f64],
    stride: usize,
    cw: usize,
    ch: usize,
    rows_first: bool,
    line: &dyn Fn(&[f64], &mut [f64]),
) {
    let mut tmp_in = vec![0.0; cw.max(ch)];
    let mut tmp_out = vec![0.0; cw.max(ch)];
    let mut do_rows = |buf: &mut [f64]| {
        for r in 0..ch {
            let row = &mut buf[r * stride..r * stride + cw];
            tmp_in[..cw].copy_from_slice(row);
            line(&tmp_in[..cw], &mut tmp_out[..cw]);
            row.copy_from_slice(&tmp_out[..cw]);
        }
    };
    let mut col_in = vec![0.0; ch];
    let mut col_out = vec![0.0; ch];
    let mut do_cols = |buf: &mut [f64]| {
        for c in 0..cw {
            for r in 0..ch {
                col_in[r] = buf[r * stride + c];
            }
            line(&col_in, &mut col_out);
            for r in 0..ch {
                buf[r * stride + c] = col_out[r];
            }
        }
    };
    if rows_first {
        do_rows(buf);
        do_cols(buf);
    } else {
        do_cols(buf);
        do_rows(buf);
    }
}

pub fn dwt2_forward(image: &Image, spec: WaveletSpec) -> Result<CoeffPyramid> {
    let (w, h) = (image.width, image.height);
    spec.check_dims(w, h)?;
    let lo = spec.filter.lowpass();
    let hi = spec.filter.highpass();
    let line = |s: &[f64], d: &mut [f64]| analyze_line(s, d, &lo, &hi);
    let mut buf = image.samples.clone();
    for level in 0..spec.levels {
        filter_region(&mut buf, w, w >> level, h >> level, true, &line);
    }

    // Mallat layout -> linear band order.
    let mut coeffs = Vec::with_capacity(w * h);
    for b in band_layout(&spec, w, h) {
        let (x0, y0) = match b.band {
            Band::Approx => (0, 0),
            Band::Horiz => (b.width, 0),
            Band::Vert => (0, b.height),
            Band::Diag => (b.width, b.height),
        };
        for y in 0..b.height {
            let start = (y0 + y) * w + x0;
            coeffs.extend_from_slice(&buf[start..start + b.width]);
        }
    }
    Ok(CoeffPyramid {
        spec,
        width: w,
        height: h,
        coeffs,
    })
}

pub fn dwt2_inverse(pyr: &CoeffPyramid) -> Result<Image> {
    let (w, h) = (pyr.width, pyr.height);
    pyr.spec.check_dims(w, h)?;
    if pyr.coeffs.len() != w * h {
        return Err(Error::Invariant(format!(
            "pyramid holds {} coefficients, expected {}",
            pyr.coeffs.len(),
            w * h
        )));
    }
    let mut buf = vec![0.0; w * h];
    for b in pyr.layout() {
        let (x0, y0) = match b.band {
            Band::Approx => (0, 0),
            Band::Horiz => (b.width, 0),
            Band::Vert => (0, b.height),
            Band::Diag => (b.width, b.height),
        };
        for y in 0..b.height {
            let start = (y0 + y) * w + x0;
            let src = b.offset + y * b.width;
            buf[start..start + b.width].copy_from_slice(&pyr.coeffs[src..src + b.width]);
        }
    }
    let lo = pyr.spec.filter.lowpass();
    let hi = pyr.spec.filter.highpass();
    let line = |s: &[f64], d: &mut [f64]| synthesize_line(s, d, &lo, &hi);
    for level in (0..pyr.spec.levels).rev() {
        filter_region(&mut buf, w, w >> level, h >> level, false, &line);
    }
    Image::new(w, h, buf)
}

/// Inverse transform keeping only the coefficients in `y`.
pub fn reconstruct_sparse(pyr: &CoeffPyramid, y: &SignificanceMap) -> Result<Image> {
    if y.len() != pyr.len() {
        return Err(Error::DomainMismatch(format!(
            "map over {} indices, pyramid has {} coefficients",
            y.len(),
            pyr.len()
        )));
    }
    let mut kept = pyr.clone();
    for (p, c) in kept.coeffs.iter_mut().enumerate() {
        if !y.contains(p) {
            *c = 0.0;
        }
    }
    dwt2_inverse(&kept)
}
