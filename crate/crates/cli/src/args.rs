use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nrerank_core::datagen::SynthSpec;
use nrerank_core::io::Precision;
use nrerank_core::SigmaMode;

use crate::config::{PipelineConfig, Preset};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "nrerank", version, about = "Neighbor-aware re-ranking for embedding retrieval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic query/gallery split.
    Synth(SynthArgs),
    /// Enhance features and refine query-gallery distances.
    Rerank(RerankArgs),
    /// Score a distance matrix with CMC and mAP.
    Eval(EvalArgs),
    /// Grid search over k1, k2, gamma and the number of orders.
    Sweep(SweepArgs),
    /// Synthesize, re-rank and evaluate in one go.
    Pipeline(PipelineArgs),
    /// Time the blocked pairwise distance computation.
    Distances(DistancesArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SigmaModeArg {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, Args)]
pub struct SynthFlags {
    /// Number of identities.
    #[arg(long, default_value_t = 50)]
    pub ids: usize,
    /// Samples per identity.
    #[arg(long, default_value_t = 10)]
    pub per_id: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 4)]
    pub cams: usize,
    /// Per-coordinate Gaussian noise std.
    #[arg(long, default_value_t = 0.35)]
    pub noise: f64,
    /// Norm of the per-camera offset.
    #[arg(long, default_value_t = 0.25)]
    pub cam_offset: f64,
    #[arg(long, default_value_t = 0.2)]
    pub query_fraction: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

impl SynthFlags {
    pub fn spec(&self) -> SynthSpec {
        SynthSpec {
            num_ids: self.ids,
            imgs_per_id: self.per_id,
            dim: self.dim,
            num_cams: self.cams,
            intra_noise: self.noise,
            cam_offset_scale: self.cam_offset,
            query_fraction: self.query_fraction,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub synth: SynthFlags,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "f32")]
    pub precision: PrecisionArg,
}

/// Re-ranking parameters. Explicit flags override the preset.
#[derive(Debug, Clone, Args, Default)]
pub struct TuningFlags {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long)]
    pub k2: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Number of neighbor orders.
    #[arg(long)]
    pub orders: Option<usize>,
    /// Base kernel bandwidth; implies `--sigma-mode fixed` unless given.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, value_enum)]
    pub sigma_mode: Option<SigmaModeArg>,
    /// Per-order decay coefficients, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Enhance in chunks of this many rows.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Value written outside the kept neighborhoods (0 or 1).
    #[arg(long)]
    pub fill: Option<f64>,
    #[arg(long)]
    pub max_rank: Option<usize>,
    /// Skip feature enhancement.
    #[arg(long)]
    pub no_dmon: bool,
    /// Skip asymmetric refinement.
    #[arg(long)]
    pub no_aro: bool,
    /// Build the refinement similarity from raw instead of enhanced features.
    #[arg(long)]
    pub aro_raw: bool,
    /// Enhance query and gallery as one set.
    #[arg(long)]
    pub joint: bool,
    /// Use unnormalized Gaussian weights.
    #[arg(long)]
    pub literal_weights: bool,
    /// Remove lower-order members from expanded orders.
    #[arg(long)]
    pub disjoint_orders: bool,
    /// Do not L2-normalize features before neighbor search.
    #[arg(long)]
    pub no_prenorm: bool,
}

impl TuningFlags {
    pub fn config(&self) -> CliResult<PipelineConfig> {
        let mut cfg = self.preset.map(Preset::config).unwrap_or_default();
        if let Some(v) = self.k1 {
            cfg.dmon.k1 = v;
        }
        if let Some(v) = self.k2 {
            cfg.aro.k2 = v;
        }
        if let Some(v) = self.gamma {
            cfg.dmon.gamma = v;
        }
        if let Some(v) = self.orders {
            cfg.dmon.orders = v;
        }
        if let Some(v) = self.sigma {
            cfg.dmon.sigma = v;
            cfg.dmon.sigma_mode = SigmaMode::Fixed;
        }
        if let Some(m) = self.sigma_mode {
            cfg.dmon.sigma_mode = match m {
                SigmaModeArg::Fixed => SigmaMode::Fixed,
                SigmaModeArg::Adaptive => SigmaMode::Adaptive,
            };
        }
        if let Some(a) = &self.alphas {
            cfg.dmon.alphas = Some(a.clone());
        }
        if let Some(b) = self.batch_size {
            cfg.dmon.batch_size = Some(b);
        }
        if let Some(f) = self.fill {
            cfg.aro.fill_value = f;
        }
        if let Some(r) = self.max_rank {
            cfg.max_rank = r;
        }
        cfg.dmon_on = !self.no_dmon;
        cfg.aro_on = !self.no_aro;
        cfg.aro_uses_enhanced = !self.aro_raw;
        cfg.joint = self.joint;
        cfg.dmon.normalize_weight_rows = !self.literal_weights;
        cfg.dmon.disjoint_orders = self.disjoint_orders;
        cfg.dmon.prenormalize = !self.no_prenorm;
        cfg.validate().map_err(CliError::from)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct RerankArgs {
    #[arg(long, required_unless_present = "manifest")]
    pub query: Option<PathBuf>,
    #[arg(long, required_unless_present = "manifest")]
    pub gallery: Option<PathBuf>,
    /// Output directory for `dist.npy` and `manifest.json`.
    #[arg(long, required_unless_present = "manifest")]
    pub out: Option<PathBuf>,
    /// Plain squared distances, no re-ranking.
    #[arg(long)]
    pub baseline: bool,
    #[command(flatten)]
    pub tuning: TuningFlags,
    #[arg(long, value_enum, default_value = "f32")]
    pub precision: PrecisionArg,
    /// Re-run from a manifest written by a previous run.
    #[arg(long, conflicts_with_all = ["query", "gallery", "baseline"])]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Distance matrix (NPY), queries by gallery.
    #[arg(long)]
    pub dist: PathBuf,
    #[arg(long)]
    pub query_labels: PathBuf,
    #[arg(long)]
    pub gallery_labels: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub max_rank: usize,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DataSource {
    #[arg(long, requires_all = ["gallery", "query_labels", "gallery_labels"])]
    pub query: Option<PathBuf>,
    #[arg(long)]
    pub gallery: Option<PathBuf>,
    #[arg(long)]
    pub query_labels: Option<PathBuf>,
    #[arg(long)]
    pub gallery_labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataSource,
    #[command(flatten)]
    pub synth: SynthFlags,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long, value_delimiter = ',')]
    pub k1: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub k2: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub orders: Option<Vec<usize>>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub fill: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_rank: Option<usize>,
    /// Table destination; `.json` selects JSON, anything else CSV. Defaults to stdout CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub synth: SynthFlags,
    #[command(flatten)]
    pub tuning: TuningFlags,
    /// Report baseline, +ARO, +DMON and +DMON+ARO.
    #[arg(long)]
    pub ablation: bool,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DistancesArgs {
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long, default_value_t = nrerank_core::tensor::DEFAULT_BLOCK)]
    pub block: usize,
    /// Write the squared distances here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "f32")]
    pub precision: PrecisionArg,
}
