use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cooc::optimizer::{InitMode, ZMode};
use cooc::FitConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "cooc", version, about = "Fit co-occurrence group models to significance maps and use them")]
pub struct Cli {
    /// Master seed; every random draw of the run derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for data-parallel steps. Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// JSON run configuration (for example a previous run.json). Flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one model to a set of maps; writes the model JSON and a trace CSV.
    Fit(FitArgs),
    /// Code length versus group size, with square-block and single-group baselines.
    Sweep(SweepArgs),
    /// Turn IDX digit images into random textured significance maps.
    Texturize(TexturizeArgs),
    /// Fit one model per digit class from a labeled map dataset.
    TrainDigits(TrainDigitsArgs),
    /// MAP decisions or per-group feature vectors for a map dataset.
    Classify(ClassifyArgs),
    /// Exact code length of every map under a model.
    EncodeCost(EncodeCostArgs),
}

/// Where training or evaluation maps come from.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct InputArgs {
    /// Synthetic corpus description (JSON).
    #[arg(long, conflicts_with = "maps")]
    pub synthetic: Option<PathBuf>,

    /// Map dataset directory (manifest.json + maps.bin).
    #[arg(long)]
    pub maps: Option<PathBuf>,

    /// Keep only maps with this label.
    #[arg(long)]
    pub label: Option<u8>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct FitArgsCommon {
    /// Group size s.
    #[arg(long)]
    pub size: Option<usize>,

    /// Histogram bins per group.
    #[arg(long)]
    pub bins: Option<usize>,

    #[arg(long)]
    pub max_iterations: Option<usize>,

    /// Relative per-iteration improvement below which fitting stops.
    #[arg(long)]
    pub tolerance: Option<f64>,

    /// random | square-blocks
    #[arg(long)]
    pub init: Option<InitMode>,

    /// quantized | empirical
    #[arg(long)]
    pub z_mode: Option<ZMode>,

    #[arg(long)]
    pub swap_passes: Option<usize>,
}

impl FitArgsCommon {
    /// Fill every unset field from the defaults of a fit at `size`.
    pub fn resolve(&mut self, default_size: Option<usize>) {
        let base = FitConfig::new(self.size.or(default_size).unwrap_or(0));
        if self.size.is_none() {
            self.size = default_size;
        }
        self.bins.get_or_insert(base.bins);
        self.max_iterations.get_or_insert(base.max_iterations);
        self.tolerance.get_or_insert(base.tolerance);
        self.init.get_or_insert(base.init);
        self.z_mode.get_or_insert(base.z_mode);
        self.swap_passes.get_or_insert(base.swap_passes);
    }

    /// Config for a resolved set of options; `size` overrides the stored one.
    pub fn config(&self, size: usize, seed: u64) -> FitConfig {
        let base = FitConfig::new(size).with_seed(seed);
        FitConfig {
            bins: self.bins.unwrap_or(base.bins),
            max_iterations: self.max_iterations.unwrap_or(base.max_iterations),
            tolerance: self.tolerance.unwrap_or(base.tolerance),
            init: self.init.unwrap_or(base.init),
            z_mode: self.z_mode.unwrap_or(base.z_mode),
            swap_passes: self.swap_passes.unwrap_or(base.swap_passes),
            ..base
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgsCommon,

    /// Model JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Trace CSV output (default: the model path with extension trace.csv).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,

    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgsCommon,

    /// Group sizes to evaluate, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,

    /// Number of leading maps used for training; the rest are held out
    /// (default: half).
    #[arg(long)]
    pub train: Option<usize>,

    /// Sweep CSV output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct TexturizeArgs {
    /// IDX image file.
    #[arg(long)]
    pub images: Option<PathBuf>,

    /// IDX label file; labels are stored with the maps.
    #[arg(long)]
    pub labels: Option<PathBuf>,

    /// Keep only the first N images of each class (needs --labels).
    #[arg(long)]
    pub per_class: Option<usize>,

    /// Keep only the first N images.
    #[arg(long)]
    pub limit: Option<usize>,

    /// Offset C added to the digit before the noise is applied.
    #[arg(long)]
    pub offset: Option<f64>,

    /// Significance threshold T.
    #[arg(long)]
    pub threshold: Option<f64>,

    /// Output dataset directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct TrainDigitsArgs {
    /// Labeled map dataset directory.
    #[arg(long)]
    pub maps: Option<PathBuf>,

    #[arg(long)]
    pub classes: Option<usize>,

    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgsCommon,

    /// Class-model JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifyMode {
    #[default]
    Predictions,
    Features,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ClassifyArgs {
    /// Class-model JSON from train-digits.
    #[arg(long)]
    pub models: Option<PathBuf>,

    /// Map dataset to classify.
    #[arg(long)]
    pub maps: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub mode: Option<ClassifyMode>,

    /// CSV output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct EncodeCostArgs {
    /// Model JSON from fit.
    #[arg(long)]
    pub model: Option<PathBuf>,

    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,

    /// Per-map CSV output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
