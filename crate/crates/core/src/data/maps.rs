//! Significance-map datasets on disk.
//!
//! A dataset is a directory holding `manifest.json` ([`DatasetManifest`]) and
//! `maps.bin`, the concatenated [`SignificanceMap::to_dump`] records in item
//! order. Maps can also be exported as binary PBM (`P4`) images; wavelet maps
//! are drawn in the usual pyramid layout.

use std::fs;
use std::path::Path;

use super::{DatasetManifest, DatasetSource};
use crate::sparsity::{IndexDomain, SignificanceMap};
use crate::wavelet::{band_layout, Band};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MAPS_FILE: &str = "maps.bin";

#[derive(Debug, Clone, PartialEq)]
pub struct MapDataset {
    pub manifest: DatasetManifest,
    pub maps: Vec<SignificanceMap>,
}

impl MapDataset {
    pub fn new(source: DatasetSource, domain: IndexDomain, maps: Vec<SignificanceMap>, labels: Option<Vec<u8>>) -> Result<Self> {
        for y in &maps {
            y.domain().ensure_same(&domain)?;
        }
        let manifest = DatasetManifest {
            source,
            count: maps.len(),
            labels,
            domain,
        };
        manifest.validate()?;
        Ok(Self { manifest, maps })
    }

    /// Maps grouped by label; `classes` buckets, labels must be below it.
    pub fn by_label(&self, classes: usize) -> Result<Vec<Vec<SignificanceMap>>> {
        let labels = self
            .manifest
            .labels
            .as_ref()
            .ok_or_else(|| Error::Invariant("dataset has no labels".into()))?;
        let mut out = vec![Vec::new(); classes];
        for (y, &l) in self.maps.iter().zip(labels) {
            let bucket = out
                .get_mut(l as usize)
                .ok_or_else(|| Error::Invariant(format!("label {l} outside [0, {classes})")))?;
            bucket.push(y.clone());
        }
        Ok(out)
    }
}

pub fn write_map_dataset(dir: impl AsRef<Path>, dataset: &MapDataset) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut payload = Vec::new();
    for y in &dataset.maps {
        payload.extend_from_slice(&y.to_dump());
    }
    fs::write(dir.join(MAPS_FILE), payload)?;
    let mut manifest = serde_json::to_string_pretty(&dataset.manifest)?;
    manifest.push('\n');
    fs::write(dir.join(MANIFEST_FILE), manifest)?;
    Ok(())
}

pub fn read_map_dataset(dir: impl AsRef<Path>) -> Result<MapDataset> {
    let dir = dir.as_ref();
    let manifest: DatasetManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    manifest.validate()?;
    manifest.domain.validate()?;
    let bytes = fs::read(dir.join(MAPS_FILE))?;
    let mut maps = Vec::with_capacity(manifest.count);
    let mut pos = 0;
    for _ in 0..manifest.count {
        let (y, used) = SignificanceMap::from_dump(manifest.domain, &bytes[pos..]).map_err(|e| match e {
            Error::Length { expected, .. } => Error::Length {
                expected: pos + expected,
                found: bytes.len(),
            },
            other => other,
        })?;
        pos += used;
        maps.push(y);
    }
    if pos != bytes.len() {
        return Err(Error::Length {
            expected: pos,
            found: bytes.len(),
        });
    }
    Ok(MapDataset { manifest, maps })
}

/// Image position `(x, y)` of every index of the domain.
pub fn display_positions(domain: &IndexDomain) -> Vec<(usize, usize)> {
    match *domain {
        IndexDomain::Pixel { width, height } => (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).collect(),
        IndexDomain::Wavelet { width, height, spec } => {
            let mut out = Vec::with_capacity(width * height);
            for b in band_layout(&spec, width, height) {
                let (ox, oy) = match b.band {
                    Band::Approx => (0, 0),
                    Band::Horiz => (b.width, 0),
                    Band::Vert => (0, b.height),
                    Band::Diag => (b.width, b.height),
                };
                for y in 0..b.height {
                    for x in 0..b.width {
                        out.push((ox + x, oy + y));
                    }
                }
            }
            out
        }
    }
}

/// Binary PBM with significant indices black.
pub fn encode_pbm(map: &SignificanceMap) -> Vec<u8> {
    let (width, height) = map.domain().dims();
    let row_bytes = width.div_ceil(8);
    let mut raster = vec![0u8; row_bytes * height];
    let positions = display_positions(map.domain());
    for p in map.iter() {
        let (x, y) = positions[p];
        raster[y * row_bytes + x / 8] |= 0x80 >> (x % 8);
    }
    let mut out = format!("P4\n{width} {height}\n").into_bytes();
    out.extend(raster);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::WaveletSpec;

    fn sample() -> MapDataset {
        let d = IndexDomain::pixel(10, 7).unwrap();
        let maps = vec![
            SignificanceMap::from_indices(d, [0, 5, 69]).unwrap(),
            SignificanceMap::empty(d),
            SignificanceMap::full(d),
        ];
        MapDataset::new(DatasetSource::Synthetic, d, maps, Some(vec![3, 0, 9])).unwrap()
    }

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample();
        write_map_dataset(dir.path(), &ds).unwrap();
        assert_eq!(read_map_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_map_dataset(dir.path(), &sample()).unwrap();
        let path = dir.path().join(MAPS_FILE);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_map_dataset(dir.path()), Err(Error::Length { .. })));
        std::fs::write(&path, [bytes.clone(), vec![0]].concat()).unwrap();
        assert!(matches!(read_map_dataset(dir.path()), Err(Error::Length { .. })));
    }

    #[test]
    fn label_buckets() {
        let buckets = sample().by_label(10).unwrap();
        assert_eq!(buckets[3].len(), 1);
        assert_eq!(buckets[0][0].count(), 0);
        assert_eq!(buckets[9][0].count(), 70);
        assert!(sample().by_label(5).is_err());
    }

    #[test]
    fn pbm_pixels() {
        let d = IndexDomain::pixel(9, 2).unwrap();
        let y = SignificanceMap::from_indices(d, [0, 8, 10]).unwrap();
        let pbm = encode_pbm(&y);
        let header = b"P4\n9 2\n";
        assert_eq!(&pbm[..header.len()], header);
        assert_eq!(&pbm[header.len()..], &[0x80, 0x80, 0x40, 0x00]);
    }

    #[test]
    fn wavelet_positions_cover_the_grid() {
        let d = IndexDomain::wavelet(WaveletSpec::haar(2).unwrap(), 8, 8).unwrap();
        let mut pos = display_positions(&d);
        // Coefficient 4 is the first horizontal detail at the coarsest scale.
        assert_eq!(pos[4], (2, 0));
        pos.sort_unstable();
        pos.dedup();
        assert_eq!(pos.len(), 64);
    }
}
