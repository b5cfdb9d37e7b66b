//! Loading and saving everything that crosses the process boundary.
//!
//! * [`idx`]: MNIST IDX image and label files (big-endian headers).
//! * [`pgm`]: binary `P5` portable graymaps.
//! * [`synthetic`]: planted-group corpora with known ground truth.
//! * [`maps`]: significance-map datasets (bitset dumps + JSON manifest) and PBM export.
//! * [`model_file`]: versioned JSON documents for fitted models.

use serde::{Deserialize, Serialize};

use crate::sparsity::IndexDomain;
use crate::{invalid, Result};

pub mod idx;
pub mod maps;
pub mod model_file;
pub mod pgm;
pub mod synthetic;

pub use idx::{read_idx_images, read_idx_labels, write_idx_images, write_idx_labels};
pub use maps::{read_map_dataset, write_map_dataset, MapDataset};
pub use model_file::{load_class_models, load_model, save_class_models, save_model};
pub use pgm::read_pgm;
pub use synthetic::{gen_synthetic, SyntheticCorpus, SyntheticSpec};

/// Grayscale image, row-major, intensities nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub samples: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != width * height {
            return Err(invalid(format!(
                "{} samples for a {width}x{height} image",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("sample {i} is not finite")));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            samples: vec![0.0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.samples[y * self.width + x]
    }

    /// `||self - other|| / ||self||`, or the absolute error when `self` is zero.
    pub fn relative_error(&self, other: &Image) -> f64 {
        let diff: f64 = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = self.samples.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 0.0 {
            diff / norm
        } else {
            diff
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSource {
    Idx,
    PgmDir,
    Synthetic,
}

/// Description of a significance-map dataset written next to the map payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source: DatasetSource,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u8>>,
    pub domain: IndexDomain,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(crate::Error::Invariant("dataset is empty".into()));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.count {
                return Err(crate::Error::Invariant(format!(
                    "{} labels for {} items",
                    labels.len(),
                    self.count
                )));
            }
            if self.source == DatasetSource::Idx {
                if let Some(l) = labels.iter().find(|&&l| l > 9) {
                    return Err(crate::Error::Invariant(format!("digit label {l} out of range")));
                }
            }
        }
        Ok(())
    }
}
