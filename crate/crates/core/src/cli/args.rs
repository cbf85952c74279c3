use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::kernel::{Estimator, KernelSpec};
use crate::trainer::{Architecture, Scorer, StopRule, TrainConfig};

#[derive(Debug, Parser)]
#[command(
    name = "handa",
    version,
    about = "Heterogeneous adversarial neural domain adaptation",
    long_about = "Trains a shared classifier for a source and a target domain with different \
                  feature spaces. Options can also come from a TOML file given with --config; \
                  flags on the command line take precedence."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on one source/target pair and evaluate on the held-out target split.
    Train(TrainArgs),
    /// Train every (beta, gamma) cell of a grid and rank the cells.
    Gridsearch(GridArgs),
    /// Compare ablation modes on one source/target pair.
    Ablate(AblateArgs),
    /// Write a synthetic source/target pair as dense CSV files.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// "label,f1,...,fm" rows
    Dense,
    /// "label idx:val ..." rows, 1-based indices
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorArg {
    Unbiased,
    Biased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerArg {
    Reverse,
    Holdout,
}

/// Data, model and optimizer options shared by train, gridsearch and ablate.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CommonArgs {
    /// TOML file with option values (keys are flag names with '_' for '-') [default: none]
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Labeled source data file (required) [default: none]
    #[arg(long, value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,

    /// Labeled target data file, split into labeled/unlabeled/test (required) [default: none]
    #[arg(long, value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<PathBuf>,

    /// Input file format
    #[arg(long, value_enum, default_value_t = DataFormat::Dense)]
    pub format: DataFormat,

    /// Labeled target samples drawn per class
    #[arg(long, default_value_t = 10)]
    pub target_labeled_per_class: usize,

    /// Fraction of the non-labeled target remainder held out for testing
    #[arg(long, default_value_t = 0.5)]
    pub test_fraction: f64,

    /// Skip per-domain feature standardization [default: off]
    #[arg(long)]
    pub no_standardize: bool,

    /// Weight of the dictionary loss
    #[arg(long, default_value_t = 1e-4)]
    pub beta: f64,

    /// Weight of the adversarial loss
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,

    /// Shared representation size; 0 picks min(m_s, m_t, 128)
    #[arg(long, default_value_t = 0)]
    pub k: usize,

    /// Dictionary updates per outer iteration
    #[arg(long, default_value_t = 1)]
    pub nd: usize,

    /// Adversarial rounds per outer iteration
    #[arg(long, default_value_t = 1)]
    pub na: usize,

    /// Classifier updates per outer iteration
    #[arg(long, default_value_t = 1)]
    pub nc: usize,

    /// Source minibatch size
    #[arg(long, default_value_t = 64)]
    pub bs: usize,

    /// Labeled target minibatch size
    #[arg(long, default_value_t = 16)]
    pub bl: usize,

    /// Unlabeled target minibatch size (capped at the unlabeled count)
    #[arg(long, default_value_t = 64)]
    pub bu: usize,

    /// Learning rate of the dictionary phase (scaled by beta)
    #[arg(long, default_value_t = 1e-3)]
    pub lr_sdl: f64,

    /// Learning rate of the minimizing adversarial player (scaled by gamma)
    #[arg(long, default_value_t = 1e-3)]
    pub lr_adv_min: f64,

    /// Learning rate of the kernel network's ascent (scaled by gamma)
    #[arg(long, default_value_t = 1e-3)]
    pub lr_adv_max: f64,

    /// Learning rate of the classifier phase
    #[arg(long, default_value_t = 1e-3)]
    pub lr_cls: f64,

    /// Maximum number of outer iterations
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,

    /// Seed for every random choice
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Trailing window of the convergence test
    #[arg(long, default_value_t = 200)]
    pub stop_window: usize,

    /// Relative tolerance of the convergence test
    #[arg(long, default_value_t = 0.1)]
    pub stop_tol: f64,

    /// Always run --max-iters iterations [default: off]
    #[arg(long)]
    pub no_stop: bool,

    /// Draw new minibatches before every phase [default: off]
    #[arg(long)]
    pub fresh_batches: bool,

    /// MMD estimator
    #[arg(long, value_enum, default_value_t = EstimatorArg::Unbiased)]
    pub estimator: EstimatorArg,

    /// Gaussian kernel bandwidths (comma list)
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    pub bandwidths: Vec<f64>,

    /// Scale bandwidths by the median pairwise distance [default: off]
    #[arg(long)]
    pub median_rescale: bool,

    /// Hidden layers of the feature network
    #[arg(long, default_value_t = 2)]
    pub hidden_layers: usize,

    /// Width of the feature network's hidden layers
    #[arg(long, default_value_t = 64)]
    pub feature_width: usize,

    /// Output size of the feature network
    #[arg(long, default_value_t = 64)]
    pub feature_dim: usize,

    /// Hidden layers of the kernel network
    #[arg(long, default_value_t = 1)]
    pub kernel_hidden_layers: usize,

    /// Width of the kernel network's hidden layers
    #[arg(long, default_value_t = 64)]
    pub kernel_width: usize,

    /// Output size of the kernel network
    #[arg(long, default_value_t = 32)]
    pub kernel_dim: usize,

    /// Output directory
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

impl CommonArgs {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            beta: self.beta,
            gamma: self.gamma,
            b_s: self.bs,
            b_l: self.bl,
            b_u: self.bu,
            n_d: self.nd,
            n_a: self.na,
            n_c: self.nc,
            lr_sdl: self.lr_sdl,
            lr_adv_min: self.lr_adv_min,
            lr_adv_max: self.lr_adv_max,
            lr_cls: self.lr_cls,
            max_outer_iters: self.max_iters,
            seed: self.seed,
            stop: (!self.no_stop).then_some(StopRule {
                window: self.stop_window,
                tol: self.stop_tol,
            }),
            fresh_batches_per_phase: self.fresh_batches,
            kernel: KernelSpec {
                bandwidths: self.bandwidths.clone(),
                median_rescale: self.median_rescale,
            },
            estimator: match self.estimator {
                EstimatorArg::Unbiased => Estimator::Unbiased,
                EstimatorArg::Biased => Estimator::Biased,
            },
            arch: Architecture {
                k: (self.k > 0).then_some(self.k),
                feature_hidden_layers: self.hidden_layers,
                feature_width: self.feature_width,
                feature_dim: self.feature_dim,
                kernel_hidden_layers: self.kernel_hidden_layers,
                kernel_width: self.kernel_width,
                kernel_dim: self.kernel_dim,
            },
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GridArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,

    /// Beta values (comma list)
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.001,0.0001,0.00001")]
    pub beta_grid: Vec<f64>,

    /// Gamma values (comma list)
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,1,10")]
    pub gamma_grid: Vec<f64>,

    /// Validation score of a cell
    #[arg(long, value_enum, default_value_t = ScorerArg::Reverse)]
    pub scorer: ScorerArg,

    /// Worker threads; results do not depend on this
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

impl ScorerArg {
    pub fn scorer(self) -> Scorer {
        match self {
            ScorerArg::Reverse => Scorer::Reverse,
            ScorerArg::Holdout => Scorer::Holdout,
        }
    }
}

pub const DEFAULT_MODES: &str = "full,nosdl,noadv,sequential,depth1,depth2,depth3,depth4,depth5";

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AblateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,

    /// Modes to run (comma list of full, nosdl, noadv, sequential, depth1..depth5, target-only)
    #[arg(long, value_delimiter = ',', default_value = DEFAULT_MODES)]
    pub modes: Vec<String>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// TOML file with option values [default: none]
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Number of classes
    #[arg(long, default_value_t = 3)]
    pub classes: usize,

    /// Latent dimension shared by both domains
    #[arg(long, default_value_t = 6)]
    pub latent_dim: usize,

    /// Source feature dimension
    #[arg(long, default_value_t = 20)]
    pub ms: usize,

    /// Target feature dimension
    #[arg(long, default_value_t = 12)]
    pub mt: usize,

    /// Samples per class in each domain
    #[arg(long, default_value_t = 200)]
    pub n_per_class: usize,

    /// Latent noise standard deviation
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,

    /// Target mean shift along the first latent axis
    #[arg(long, default_value_t = 1.0)]
    pub shift: f64,

    /// Generator seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Use one mixing matrix for both domains (needs --ms equal to --mt) [default: off]
    #[arg(long)]
    pub share_mixing: bool,

    /// Output directory for source.csv and target.csv
    #[arg(long, default_value = "synthetic")]
    pub out: PathBuf,
}
