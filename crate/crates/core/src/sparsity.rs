//! Significance maps: which entries of a representation exceed a threshold.

use serde::{Deserialize, Serialize};

use crate::data::Image;
use crate::model::binom_bits;
use crate::rng::{stream_seed, SplitMix64};
use crate::wavelet::{dwt2_forward, WaveletSpec};
use crate::{invalid, Error, Result};

/// The index set `ȳ` a significance map lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexDomain {
    Pixel {
        width: usize,
        height: usize,
    },
    Wavelet {
        width: usize,
        height: usize,
        #[serde(flatten)]
        spec: WaveletSpec,
    },
}

impl IndexDomain {
    pub fn pixel(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid(format!("empty pixel domain {width}x{height}")));
        }
        Ok(IndexDomain::Pixel { width, height })
    }

    pub fn wavelet(spec: WaveletSpec, width: usize, height: usize) -> Result<Self> {
        spec.check_dims(width, height)?;
        Ok(IndexDomain::Wavelet {
            width,
            height,
            spec,
        })
    }

    /// Pixel domain of `size` indices laid out as the most square
    /// `width x height` grid with `height <= width`.
    pub fn pixel_of_size(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(invalid("empty domain"));
        }
        let height = (1..=size)
            .take_while(|h| h * h <= size)
            .filter(|h| size.is_multiple_of(*h))
            .last()
            .unwrap_or(1);
        Self::pixel(size / height, height)
    }

    pub fn size(&self) -> usize {
        let (w, h) = self.dims();
        w * h
    }

    pub fn dims(&self) -> (usize, usize) {
        match *self {
            IndexDomain::Pixel { width, height } | IndexDomain::Wavelet { width, height, .. } => {
                (width, height)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            IndexDomain::Pixel { width, height } => Self::pixel(width, height).map(|_| ()),
            IndexDomain::Wavelet {
                width,
                height,
                spec,
            } => spec.check_dims(width, height),
        }
    }

    pub fn ensure_same(&self, other: &IndexDomain) -> Result<()> {
        if self != other {
            return Err(Error::DomainMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Subset `y` of an [`IndexDomain`], stored as a bitset of 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignificanceMap {
    domain: IndexDomain,
    words: Vec<u64>,
}

impl SignificanceMap {
    pub fn empty(domain: IndexDomain) -> Self {
        Self {
            domain,
            words: vec![0; domain.size().div_ceil(64)],
        }
    }

    pub fn full(domain: IndexDomain) -> Self {
        let mut m = Self::empty(domain);
        for p in 0..domain.size() {
            m.insert(p);
        }
        m
    }

    pub fn from_indices(domain: IndexDomain, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut m = Self::empty(domain);
        for p in indices {
            if p >= domain.size() {
                return Err(invalid(format!("index {p} outside domain of size {}", domain.size())));
            }
            m.insert(p);
        }
        Ok(m)
    }

    pub fn from_bools(domain: IndexDomain, bits: &[bool]) -> Result<Self> {
        if bits.len() != domain.size() {
            return Err(Error::DomainMismatch(format!(
                "{} flags for a domain of {}",
                bits.len(),
                domain.size()
            )));
        }
        Self::from_indices(domain, bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i))
    }

    pub(crate) fn from_words(domain: IndexDomain, words: Vec<u64>) -> Result<Self> {
        let n = domain.size();
        if words.len() != n.div_ceil(64) {
            return Err(Error::Format(format!(
                "{} words for {n} bits",
                words.len()
            )));
        }
        if !n.is_multiple_of(64) && words.last().is_some_and(|w| w >> (n % 64) != 0) {
            return Err(Error::Format("bits set beyond the domain".into()));
        }
        Ok(Self { domain, words })
    }

    pub fn domain(&self) -> &IndexDomain {
        &self.domain
    }

    /// Size of the domain `|ȳ|`.
    pub fn len(&self) -> usize {
        self.domain.size()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Cardinality `|y|`.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    #[inline]
    pub fn contains(&self, p: usize) -> bool {
        (self.words[p / 64] >> (p % 64)) & 1 == 1
    }

    pub fn insert(&mut self, p: usize) {
        self.words[p / 64] |= 1 << (p % 64);
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                (rest != 0).then(|| {
                    let b = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    wi * 64 + b
                })
            })
        })
    }

    pub fn is_subset(&self, other: &SignificanceMap) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Raw dump: bit length as little-endian `u64`, then the words little-endian.
    pub fn to_dump(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 * (1 + self.words.len()));
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    /// Parse one dump from the front of `bytes`; returns the map and bytes consumed.
    pub fn from_dump(domain: IndexDomain, bytes: &[u8]) -> Result<(Self, usize)> {
        let head = bytes.get(..8).ok_or(Error::Length {
            expected: 8,
            found: bytes.len(),
        })?;
        let bits = u64::from_le_bytes(head.try_into().expect("8 bytes")) as usize;
        if bits != domain.size() {
            return Err(Error::DomainMismatch(format!(
                "dump holds {bits} bits, domain has {}",
                domain.size()
            )));
        }
        let nwords = bits.div_ceil(64);
        let end = 8 + 8 * nwords;
        let body = bytes.get(8..end).ok_or(Error::Length {
            expected: end,
            found: bytes.len(),
        })?;
        let words = body
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok((Self::from_words(domain, words)?, end))
    }
}

/// `{p : |values[p]| > threshold}`.
pub fn significance_map(domain: IndexDomain, values: &[f64], threshold: f64) -> Result<SignificanceMap> {
    if values.len() != domain.size() {
        return Err(Error::DomainMismatch(format!(
            "{} values for a domain of {}",
            values.len(),
            domain.size()
        )));
    }
    if threshold.is_nan() || threshold < 0.0 {
        return Err(invalid(format!("threshold {threshold} must be non-negative")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("values must be finite"));
    }
    SignificanceMap::from_indices(
        domain,
        values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > threshold)
            .map(|(i, _)| i),
    )
}

/// Threshold that keeps the `floor(density * n)` largest magnitudes.
///
/// The threshold is the next magnitude below the kept ones, so entries tied
/// with it are dropped: fewer than the target may survive when magnitudes tie
/// at the boundary.
pub fn threshold_for_density(values: &[f64], density: f64) -> Result<f64> {
    if !(density > 0.0 && density < 1.0) {
        return Err(invalid(format!("density {density} must lie in (0, 1)")));
    }
    if values.is_empty() {
        return Err(invalid("no values"));
    }
    let mut mags: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let keep = (density * values.len() as f64).floor() as usize;
    Ok(mags[keep.min(values.len() - 1)])
}

/// Bits needed to code `y` in `ȳ` without prior: `log2 C(|ȳ|, |y|)`.
pub fn baseline_bits_r0(domain_size: usize, count: usize) -> Result<f64> {
    binom_bits(domain_size, count)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    Absolute(f64),
    Density(f64),
}

impl ThresholdRule {
    pub fn apply(&self, domain: IndexDomain, values: &[f64]) -> Result<SignificanceMap> {
        let t = match *self {
            ThresholdRule::Absolute(t) => t,
            ThresholdRule::Density(rho) => threshold_for_density(values, rho)?,
        };
        significance_map(domain, values, t)
    }
}

/// Significance map of an image, in the pixel domain or over its wavelet
/// coefficients.
pub fn image_significance(
    image: &Image,
    wavelet: Option<WaveletSpec>,
    rule: ThresholdRule,
) -> Result<SignificanceMap> {
    match wavelet {
        None => rule.apply(IndexDomain::pixel(image.width, image.height)?, &image.samples),
        Some(spec) => {
            let pyr = dwt2_forward(image, spec)?;
            rule.apply(IndexDomain::wavelet(spec, image.width, image.height)?, &pyr.coeffs)
        }
    }
}

/// Parameters of the random digit `(f + C) W` and its threshold `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TexturizeParams {
    pub offset: f64,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for TexturizeParams {
    fn default() -> Self {
        Self {
            offset: 1.0,
            threshold: 2.0,
            seed: 0,
        }
    }
}

impl TexturizeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.offset > 0.0 && self.threshold > 0.0) {
            return Err(invalid(format!(
                "offset {} and threshold {} must be positive",
                self.offset, self.threshold
            )));
        }
        Ok(())
    }
}

/// Multiply `f + C` by white Gaussian noise drawn from `SplitMix64::new(seed)`
/// and threshold the magnitude at `T` in the pixel domain.
pub fn texturize_digit(f: &Image, params: &TexturizeParams) -> Result<(Image, SignificanceMap)> {
    params.validate()?;
    let mut rng = SplitMix64::new(params.seed);
    let samples: Vec<f64> = f
        .samples
        .iter()
        .map(|&v| (v + params.offset) * rng.normal())
        .collect();
    let textured = Image::new(f.width, f.height, samples)?;
    let map = significance_map(
        IndexDomain::pixel(f.width, f.height)?,
        &textured.samples,
        params.threshold,
    )?;
    Ok((textured, map))
}

/// Texturize a batch; image `i` draws its noise from stream `i` of `params.seed`.
pub fn texturize_batch(images: &[Image], params: &TexturizeParams) -> Result<Vec<SignificanceMap>> {
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let p = TexturizeParams {
                seed: stream_seed(params.seed, i as u64),
                ..*params
            };
            texturize_digit(img, &p).map(|(_, m)| m)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(n: usize) -> IndexDomain {
        IndexDomain::pixel(n, 1).unwrap()
    }

    #[test]
    fn threshold_examples() {
        assert!(significance_map(line(3), &[0.0; 3], 0.0).unwrap().is_empty());
        let m = significance_map(line(3), &[3.0, -5.0, 1.0], 2.0).unwrap();
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![0, 1]);
        assert!(significance_map(line(3), &[3.0, -5.0, 1.0], 5.0).unwrap().is_empty());
        assert!(significance_map(line(2), &[1.0; 3], 0.5).is_err());
    }

    #[test]
    fn density_threshold() {
        let v = [4.0, 3.0, 2.0, 1.0];
        let t = threshold_for_density(&v, 0.5).unwrap();
        let m = significance_map(line(4), &v, t).unwrap();
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![0, 1]);

        let flat = [2.0; 8];
        for rho in [0.1, 0.5, 0.9] {
            let t = threshold_for_density(&flat, rho).unwrap();
            assert!(significance_map(line(8), &flat, t).unwrap().is_empty());
        }
        let t = threshold_for_density(&v, 0.2).unwrap();
        assert!(significance_map(line(4), &v, t).unwrap().is_empty());
        assert!(threshold_for_density(&v, 1.0).is_err());
    }

    #[test]
    fn r0_values() {
        assert_eq!(baseline_bits_r0(50, 0).unwrap(), 0.0);
        assert!((baseline_bits_r0(16, 8).unwrap() - 12870f64.log2()).abs() < 1e-9);
        let oracle: f64 = (0..100).map(|i| ((784 - i) as f64).log2() - ((i + 1) as f64).log2()).sum();
        assert!((baseline_bits_r0(784, 100).unwrap() - oracle).abs() < 1e-9);
        assert!(baseline_bits_r0(3, 4).is_err());
        assert!(baseline_bits_r0(1_000_000, 500_000).unwrap().is_finite());
    }

    #[test]
    fn dump_roundtrip_and_pixel_of_size() {
        let d = IndexDomain::pixel_of_size(70).unwrap();
        assert_eq!(d, IndexDomain::Pixel { width: 10, height: 7 });
        let m = SignificanceMap::from_indices(d, [0, 3, 63, 64, 69]).unwrap();
        let dump = m.to_dump();
        assert_eq!(dump.len(), 8 + 16);
        let (back, used) = SignificanceMap::from_dump(d, &dump).unwrap();
        assert_eq!((back, used), (m, dump.len()));
    }

    #[test]
    fn texturize_is_deterministic() {
        let img = Image::new(4, 4, (0..16).map(|i| (i % 2) as f64).collect()).unwrap();
        let p = TexturizeParams {
            seed: 42,
            ..Default::default()
        };
        assert_eq!(texturize_digit(&img, &p).unwrap(), texturize_digit(&img, &p).unwrap());
    }

    #[test]
    fn texturize_tail_probabilities() {
        // P(|W| > 2) = erfc(sqrt 2) and P(|W| > 1) = erfc(1/sqrt 2).
        let n = 1_000_000usize;
        let cases = [(0.0, 0.045_500_263_896_358_4), (1.0, 0.317_310_507_862_914_1)];
        for (value, p) in cases {
            let img = Image::new(1000, 1000, vec![value; n]).unwrap();
            let params = TexturizeParams {
                seed: 1234,
                ..Default::default()
            };
            let (_, m) = texturize_digit(&img, &params).unwrap();
            let rate = m.count() as f64 / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((rate - p).abs() < 3.0 * sigma, "rate {rate} vs {p}");
        }
    }

    proptest! {
        #[test]
        fn monotone_in_threshold(values in prop::collection::vec(-10.0f64..10.0, 1..64),
                                 t1 in 0.0f64..10.0, dt in 0.0f64..5.0) {
            let d = line(values.len());
            let lo = significance_map(d, &values, t1).unwrap();
            let hi = significance_map(d, &values, t1 + dt).unwrap();
            prop_assert!(hi.is_subset(&lo));
        }

        #[test]
        fn r0_symmetric(n in 1usize..5000, frac in 0.0f64..1.0) {
            let k = (frac * n as f64) as usize;
            let a = baseline_bits_r0(n, k).unwrap();
            let b = baseline_bits_r0(n, n - k).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn iter_matches_contains(idx in prop::collection::btree_set(0usize..200, 0..50)) {
            let d = line(200);
            let m = SignificanceMap::from_indices(d, idx.iter().copied()).unwrap();
            prop_assert_eq!(m.iter().collect::<Vec<_>>(), idx.iter().copied().collect::<Vec<_>>());
            prop_assert_eq!(m.count(), idx.len());
        }
    }
}
