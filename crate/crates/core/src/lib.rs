//! # cooc
//!
//! Geometric models of sparse image representations built from
//! co-occurrence groups.
//!
//! A class of images is summarized by a balanced partition of the
//! representation index set (pixels or wavelet coefficients) into groups
//! whose members tend to be significant together. Each group carries a
//! quantized histogram of how many of its members are significant. The
//! resulting mixture assigns an exact probability, and therefore an ideal
//! code length, to every significance map.
//!
//! ## Layout
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`data`] | IDX / PGM loaders, synthetic planted-group corpora, model and map files |
//! | [`wavelet`] | separable orthonormal 2-D wavelet transform (Haar, Daubechies-4) |
//! | [`sparsity`] | index domains, significance maps, thresholds, textured digits |
//! | [`model`] | groupings, histograms, exact and relaxed code lengths |
//! | [`optimizer`] | alternating minimization that fits a model to training maps |
//! | [`classify`] | group-size sweeps, per-class models, MAP decisions, feature export |
//! | [`rng`] | the documented SplitMix64 generator every random draw goes through |
//!
//! ## Quick start
//!
//! ```
//! use cooc::data::{gen_synthetic, SyntheticSpec};
//! use cooc::optimizer::{fit, FitConfig};
//! use cooc::model::total_bits;
//!
//! let spec = SyntheticSpec::uniform(64, 8, 0.9, 0.05, 100, 7);
//! let corpus = gen_synthetic(&spec).unwrap();
//! let (model, trace) = fit(&corpus.maps, &FitConfig::new(8)).unwrap();
//! assert!(trace.is_monotone());
//! let cost = total_bits(&corpus.maps, &model).unwrap();
//! assert!(cost.bits_per_index < 1.0);
//! ```

use thiserror::Error;

pub mod classify;
pub mod data;
pub mod model;
pub mod optimizer;
pub mod rng;
pub mod sparsity;
pub mod wavelet;

pub use data::Image;
pub use model::{CoocModel, GroupHistogram, Grouping};
pub use optimizer::{fit, FitConfig, FitTrace};
pub use sparsity::{IndexDomain, SignificanceMap};

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },

    #[error("unsupported variant: {0}")]
    UnsupportedVariant(String),

    #[error("unsupported version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
