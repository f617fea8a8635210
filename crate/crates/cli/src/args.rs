//! Subcommand arguments. Every field is optional so command-line values can
//! be layered over a config file section and then over built-in defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use lsr_core::{EmbedderMode, Metric};
use serde::Deserialize;

use crate::CliError;

macro_rules! layered {
    ($(#[$m:meta])* pub struct $name:ident { $($(#[$fm:meta])* pub $f:ident: Option<$t:ty>,)* }) => {
        $(#[$m])*
        #[derive(Args, Clone, Debug, Default, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $($(#[$fm])* pub $f: Option<$t>,)*
        }

        impl $name {
            /// Fills unset fields from `lower`.
            pub fn layer(self, lower: Self) -> Self {
                Self { $($f: self.$f.or(lower.$f),)* }
            }
        }
    };
}

layered! {
    /// Generate a symbolic boxworld dataset.
    pub struct GenArgs {
        /// Output dataset file (JSON lines).
        #[arg(long)]
        pub out: Option<PathBuf>,
        /// Number of tuples [default: 5000].
        #[arg(long)]
        pub n: Option<usize>,
        /// Fraction of tuples that are action pairs [default: 0.65].
        #[arg(long)]
        pub action_fraction: Option<f64>,
        /// Random seed [default: 0].
        #[arg(long)]
        pub seed: Option<u64>,
    }
}

layered! {
    /// Embed a symbolic dataset into latent space.
    pub struct EmbedArgs {
        /// Symbolic dataset to embed.
        #[arg(long)]
        pub dataset: Option<PathBuf>,
        /// Output latent dataset file.
        #[arg(long)]
        pub out: Option<PathBuf>,
        /// Output embedder file.
        #[arg(long)]
        pub embedder_out: Option<PathBuf>,
        /// Latent dimension [default: 64].
        #[arg(long)]
        pub latent_dim: Option<usize>,
        /// Distance metric: L1, L2 or Linf [default: L1].
        #[arg(long)]
        pub metric: Option<Metric>,
        /// separated or overlapping [default: separated].
        #[arg(long)]
        pub mode: Option<EmbedderMode>,
        /// Closest centroid spacing (separated) or mean spacing (overlapping) [default: 20].
        #[arg(long)]
        pub d_m: Option<f64>,
        /// Random seed [default: 0].
        #[arg(long)]
        pub seed: Option<u64>,
        /// Per-coordinate noise scale [default: calibrated to 0.1 * d_m].
        #[arg(long)]
        pub noise_sigma: Option<f64>,
        /// Subspace rank in overlapping mode [default: 2].
        #[arg(long)]
        pub overlap_rank: Option<usize>,
        /// Iteration budget for centroid separation [default: 4000].
        #[arg(long)]
        pub repulsion_budget: Option<usize>,
    }
}

layered! {
    /// Build a roadmap from a latent dataset.
    pub struct BuildArgs {
        /// Latent dataset.
        #[arg(long)]
        pub dataset: Option<PathBuf>,
        /// Output roadmap file.
        #[arg(long)]
        pub out: Option<PathBuf>,
        /// Weight on the no-action distance spread [default: 0.5].
        #[arg(long, allow_hyphen_values = true)]
        pub w_eps: Option<f64>,
        /// Explicit clustering radius; overrides --w-eps.
        #[arg(long)]
        pub epsilon: Option<f64>,
        /// Smallest region kept as a node [default: 1].
        #[arg(long)]
        pub min_samples: Option<usize>,
    }
}

layered! {
    /// Plan between two configurations.
    pub struct PlanArgs {
        /// Roadmap file.
        #[arg(long)]
        pub roadmap: Option<PathBuf>,
        /// Embedder file.
        #[arg(long)]
        pub embedder: Option<PathBuf>,
        /// Optional action proposal model; adds proposed actions to the listing.
        #[arg(long)]
        pub model: Option<PathBuf>,
        /// Start configuration: a label or a 9-character grid such as AB.CD....
        #[arg(long)]
        pub start: Option<String>,
        /// Goal configuration, same format as --start.
        #[arg(long)]
        pub goal: Option<String>,
        /// Seed for encoding start and goal [default: 0].
        #[arg(long)]
        pub seed: Option<u64>,
        /// Maximum number of shortest paths listed [default: 100].
        #[arg(long)]
        pub cap: Option<usize>,
    }
}

layered! {
    /// Train the action proposal network.
    pub struct TrainApnArgs {
        /// Latent dataset; only action pairs are used.
        #[arg(long)]
        pub dataset: Option<PathBuf>,
        /// Embedder file, used for the default --posterior-sigma.
        #[arg(long)]
        pub embedder: Option<PathBuf>,
        /// Output model file.
        #[arg(long)]
        pub out: Option<PathBuf>,
        /// Accuracy report CSV.
        #[arg(long)]
        pub report: Option<PathBuf>,
        /// Augmented copies per pair [default: 1].
        #[arg(long)]
        pub s: Option<usize>,
        /// Noise scale of augmented copies [default: the embedder's noise_sigma].
        #[arg(long)]
        pub posterior_sigma: Option<f64>,
        /// Training epochs [default: 30].
        #[arg(long)]
        pub epochs: Option<usize>,
        /// SGD step size [default: 0.05].
        #[arg(long)]
        pub step_size: Option<f64>,
        /// Mini-batch size [default: 32].
        #[arg(long)]
        pub batch_size: Option<usize>,
        /// Fraction of action pairs held out for the accuracy report [default: 0.2].
        #[arg(long)]
        pub test_fraction: Option<f64>,
        /// Random seed [default: 0].
        #[arg(long)]
        pub seed: Option<u64>,
        /// Fail with exit code 2 if held-out pick or release accuracy (percent) is lower.
        #[arg(long)]
        pub min_acc: Option<f64>,
    }
}

layered! {
    /// Evaluate planning on random start and goal states.
    pub struct EvalArgs {
        /// Roadmap file.
        #[arg(long)]
        pub roadmap: Option<PathBuf>,
        /// Embedder file.
        #[arg(long)]
        pub embedder: Option<PathBuf>,
        /// Optional model; adds a full-pipeline report with proposed actions.
        #[arg(long)]
        pub model: Option<PathBuf>,
        /// Also score straight-line latent paths.
        #[arg(long, num_args = 0, default_missing_value = "true")]
        pub linear: Option<bool>,
        /// Number of trials [default: 1000].
        #[arg(long)]
        pub n_trials: Option<usize>,
        /// Random seed [default: 0].
        #[arg(long)]
        pub seed: Option<u64>,
        /// Maximum shortest paths scored per trial [default: 100].
        #[arg(long)]
        pub cap: Option<usize>,
        /// The w_eps used to build the roadmap, echoed in the reports.
        #[arg(long, allow_hyphen_values = true)]
        pub w_eps: Option<f64>,
        /// Report CSV.
        #[arg(long)]
        pub csv: Option<PathBuf>,
        /// Report summary (JSON).
        #[arg(long)]
        pub summary: Option<PathBuf>,
        /// Minimum All percentage of the roadmap report.
        #[arg(long)]
        pub min_all: Option<f64>,
        /// Minimum Any percentage of the roadmap report.
        #[arg(long)]
        pub min_any: Option<f64>,
        /// Minimum Trans percentage of the roadmap report.
        #[arg(long)]
        pub min_trans: Option<f64>,
        /// Minimum percentage of proposed actions reaching the next state.
        #[arg(long)]
        pub min_apn: Option<f64>,
    }
}

layered! {
    /// Optimize free embeddings on the action loss and report class statistics.
    pub struct OptimizeArgs {
        /// Symbolic dataset.
        #[arg(long)]
        pub dataset: Option<PathBuf>,
        /// Output embedding set file.
        #[arg(long)]
        pub out: Option<PathBuf>,
        /// Per-class statistics CSV.
        #[arg(long)]
        pub stats: Option<PathBuf>,
        /// Latent dimension [default: 64].
        #[arg(long)]
        pub latent_dim: Option<usize>,
        /// Distance metric [default: L1].
        #[arg(long)]
        pub metric: Option<Metric>,
        /// Minimum action-pair distance [default: 20].
        #[arg(long)]
        pub d_m: Option<f64>,
        /// Action term weight [default: 1].
        #[arg(long)]
        pub gamma: Option<f64>,
        /// Quadratic pull toward the origin [default: 0.001].
        #[arg(long)]
        pub lambda_prior: Option<f64>,
        /// Gradient steps [default: 2000].
        #[arg(long)]
        pub steps: Option<usize>,
        /// Step size [default: 0.001].
        #[arg(long)]
        pub step_size: Option<f64>,
        /// Standard deviation of the initial class codes [default: 0.1].
        #[arg(long)]
        pub init_spread: Option<f64>,
        /// Random seed [default: 0].
        #[arg(long)]
        pub seed: Option<u64>,
        /// Minimum percentage of classes with positive margin.
        #[arg(long)]
        pub min_positive_margin: Option<f64>,
    }
}

layered! {
    /// Sweep w_eps: build and evaluate one roadmap per grid value.
    pub struct SweepArgs {
        /// Latent dataset.
        #[arg(long)]
        pub dataset: Option<PathBuf>,
        /// Embedder file.
        #[arg(long)]
        pub embedder: Option<PathBuf>,
        /// Comma-separated w_eps values [default: -0.5,0,0.5,1].
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        pub grid: Option<Vec<f64>>,
        /// Smallest region kept as a node [default: 1].
        #[arg(long)]
        pub min_samples: Option<usize>,
        /// Trials per grid value [default: 1000].
        #[arg(long)]
        pub n_trials: Option<usize>,
        /// Random seed [default: 0].
        #[arg(long)]
        pub seed: Option<u64>,
        /// Sweep report CSV.
        #[arg(long)]
        pub out: Option<PathBuf>,
        /// Sweep summary (JSON).
        #[arg(long)]
        pub summary: Option<PathBuf>,
        /// Write the best grid value's roadmap here.
        #[arg(long)]
        pub roadmap_out: Option<PathBuf>,
    }
}

/// Config file layout: one optional table per subcommand, keys named like
/// the long flags with underscores.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub gen: GenArgs,
    #[serde(default)]
    pub embed: EmbedArgs,
    #[serde(default)]
    pub build: BuildArgs,
    #[serde(default)]
    pub plan: PlanArgs,
    #[serde(default, rename = "train-apn")]
    pub train_apn: TrainApnArgs,
    #[serde(default)]
    pub eval: EvalArgs,
    #[serde(default, rename = "optimize-embeddings")]
    pub optimize_embeddings: OptimizeArgs,
    #[serde(default)]
    pub sweep: SweepArgs,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Unwraps a required setting.
pub fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing --{flag} (or `{}` in the config file)", flag.replace('-', "_"))))
}
