use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use refine_core::kernel::Metric;
use refine_core::pipeline::Evaluation;
use refine_core::reference::{KernelChoice, Symmetrization};
use refine_core::rewire::Direction;

#[derive(Parser, Debug)]
#[command(name = "refine", version, about = "Label-guided graph rewiring for heterophilic graphs")]
pub struct Cli {
    /// Print machine-readable JSON on stdout instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Cluster, build reference graphs, rewire, and reassemble.
    Rewire(RewireArgs),
    /// Edge homophily of a dataset.
    Homophily(HomophilyArgs),
    /// Build and export the reference graph (and optionally the kernel).
    Reference(ReferenceArgs),
    /// Run the exhaustive and randomized check suites.
    Validate(ValidateArgs),
    /// Generate a stochastic block model dataset.
    Synth(SynthArgs),
    /// Homophily-versus-k curves against perturbed ideal references.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DirectionArg {
    Add,
    Delete,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Add => Direction::Add,
            DirectionArg::Delete => Direction::Delete,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KernelArg {
    Pdp,
    DOnly,
}

impl From<KernelArg> for KernelChoice {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Pdp => KernelChoice::Pdp,
            KernelArg::DOnly => KernelChoice::DOnly,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MetricArg {
    Euclidean,
    Cosine,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Euclidean => Metric::Euclidean,
            MetricArg::Cosine => Metric::CosineDistance,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SymmetrizationArg {
    Or,
    And,
}

impl From<SymmetrizationArg> for Symmetrization {
    fn from(s: SymmetrizationArg) -> Self {
        match s {
            SymmetrizationArg::Or => Symmetrization::Or,
            SymmetrizationArg::And => Symmetrization::And,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EvaluationArg {
    Exact,
    Sampled,
}

impl From<EvaluationArg> for Evaluation {
    fn from(e: EvaluationArg) -> Self {
        match e {
            EvaluationArg::Exact => Evaluation::Exact,
            EvaluationArg::Sampled => Evaluation::Sampled,
        }
    }
}

/// Reference-graph settings shared by `rewire` and `reference`. Unset
/// values fall back to the config file, then to defaults.
#[derive(Args, Debug, Clone)]
pub struct ReferenceOpts {
    /// Kernel scale: a value, a comma-separated grid, or `grid`.
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long, value_enum)]
    pub symmetrization: Option<SymmetrizationArg>,
    /// Target cluster size, or `auto`.
    #[arg(long)]
    pub cluster_size: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Labels used by diagnostics.
    #[arg(long, value_enum)]
    pub evaluation: Option<EvaluationArg>,
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RewireArgs {
    /// Dataset directory.
    #[arg(long)]
    pub input: PathBuf,
    /// Where `rewired_edges.tsv` and `report.json` go (default: the input directory).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
    /// Edges per cluster: a count, or a fraction of the pool in (0, 1].
    #[arg(long)]
    pub k: Option<String>,
    #[command(flatten)]
    pub reference: ReferenceOpts,
    /// Exit 0 even when some cluster was passed through unchanged.
    #[arg(long)]
    pub allow_degraded: bool,
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
pub enum LabelScope {
    /// Every known label.
    #[default]
    All,
    /// Known labels outside the test split.
    Evaluation,
}

#[derive(Args, Debug)]
pub struct HomophilyArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = LabelScope::All)]
    pub labels: LabelScope,
}

#[derive(Args, Debug)]
pub struct ReferenceArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Where `reference_edges.tsv` goes (default: the input directory).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub reference: ReferenceOpts,
    /// Also write `kernel.bin` and `kernel.meta` (single cluster only).
    #[arg(long)]
    pub dump_kernel: bool,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Closed-form expectations and monotonicity against exhaustive subsets.
    #[arg(long)]
    pub propositions: bool,
    /// Dirichlet energy lower bound on random graphs.
    #[arg(long)]
    pub theorem: bool,
    /// Sampled executions against the closed form.
    #[arg(long)]
    pub monte_carlo: bool,
    #[arg(long, default_value_t = 8)]
    pub n_max: usize,
    #[arg(long, default_value_t = 250)]
    pub cases: usize,
    /// Largest candidate pool enumerated exhaustively.
    #[arg(long, default_value_t = 12)]
    pub max_pool: usize,
    #[arg(long, default_value_t = 1000)]
    pub theorem_trials: usize,
    #[arg(long, default_value_t = 10)]
    pub theorem_n_max: usize,
    #[arg(long, default_value_t = 10)]
    pub mc_configs: usize,
    #[arg(long, default_value_t = 10_000)]
    pub mc_executions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Block model parameters shared by `synth` and `sweep`.
#[derive(Args, Debug, Clone)]
pub struct SbmOpts {
    /// Comma-separated class sizes; overrides --classes/--class-size.
    #[arg(long)]
    pub sizes: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 40)]
    pub class_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub intra_p: f64,
    #[arg(long, default_value_t = 0.1)]
    pub inter_p: f64,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.6)]
    pub train: f64,
    #[arg(long, default_value_t = 0.2)]
    pub val: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub sbm: SbmOpts,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SweepDirection {
    Add,
    Delete,
    Both,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Fully labeled dataset; without it a block model is generated.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Directory for the CSV files.
    #[arg(long, default_value = ".")]
    pub output: PathBuf,
    /// Comma-separated flip rates.
    #[arg(long, default_value = "0.1,0.3,0.6")]
    pub p: String,
    #[arg(long, default_value_t = 30)]
    pub trials: usize,
    #[arg(long, value_enum, default_value_t = SweepDirection::Add)]
    pub direction: SweepDirection,
    /// Comma-separated fractions of the pool; 0 is always included.
    #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    pub k_fractions: String,
    /// Keep only this fraction of each perturbed reference.
    #[arg(long)]
    pub sparsify: Option<f64>,
    #[command(flatten)]
    pub sbm: SbmOpts,
}
