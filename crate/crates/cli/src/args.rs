use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "ecmmd",
    version,
    about = "Conditional two-sample and goodness-of-fit testing via ECMMD over K-NN graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Conditional two-sample test on a CSV of (x_*, y_*, z_*) columns
    Test(TestArgs),
    /// Conditional goodness-of-fit test on (y_*, z_*) columns with a
    /// built-in sampler or pre-drawn resample columns
    Gof(GofArgs),
    /// Calibration audits of predictive models
    #[command(subcommand)]
    Calibrate(CalibrateCmd),
    /// Synthetic scenario simulations with rejection-rate summaries
    #[command(subcommand)]
    Sim(SimCmd),
}

#[derive(Args, Clone)]
pub struct CommonArgs {
    /// Number of nearest neighbors
    #[arg(short, long)]
    pub k: usize,

    /// Kernel: linear | gaussian[:<bandwidth>|:median]
    #[arg(long, default_value = "gaussian:median")]
    pub kernel: String,

    /// Nominal level of the test
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    /// Master seed for every random draw
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Write the JSON report to this path instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct MappingArgs {
    /// Explicit comma-separated x columns (default: prefix x_)
    #[arg(long)]
    pub x_cols: Option<String>,

    /// Explicit comma-separated y columns (default: prefix y_)
    #[arg(long)]
    pub y_cols: Option<String>,

    /// Explicit comma-separated z columns (default: prefix z_)
    #[arg(long)]
    pub z_cols: Option<String>,
}

#[derive(Args)]
pub struct TestArgs {
    pub input: PathBuf,

    #[command(flatten)]
    pub common: CommonArgs,

    #[command(flatten)]
    pub mapping: MappingArgs,

    /// Test mode; the two-sample command supports only `asymptotic`
    #[arg(long, default_value = "asymptotic")]
    pub mode: String,

    /// One-sided alternative (population ECMMD is nonnegative)
    #[arg(long)]
    pub one_sided: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GofMode {
    Finite,
    Derandomized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SamplerKind {
    Gaussian,
    Multinomial,
}

#[derive(Args)]
pub struct GofArgs {
    pub input: PathBuf,

    #[command(flatten)]
    pub common: CommonArgs,

    #[command(flatten)]
    pub mapping: MappingArgs,

    /// finite (Algorithm-style exchangeable test) or derandomized
    #[arg(long, value_enum, default_value_t = GofMode::Finite)]
    pub mode: GofMode,

    /// Resample count M for the finite-sample test
    #[arg(long = "M", default_value_t = 99)]
    pub m: usize,

    /// Resample count M_n for the derandomized test
    #[arg(long = "Mn", default_value_t = 50)]
    pub m_n: usize,

    /// Built-in conditional sampler
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerKind>,

    /// Affine mean coefficients for the Gaussian sampler (default: all 1)
    #[arg(long)]
    pub mean_coef: Option<String>,

    /// Affine mean intercept for the Gaussian sampler
    #[arg(long, default_value_t = 0.0)]
    pub mean_intercept: f64,

    /// Constant standard deviation for the Gaussian sampler
    #[arg(long)]
    pub sd: Option<f64>,

    /// Variance bump "rho,center,scale" along the affine mean index m(z):
    /// sd(z) = sqrt(1 + rho exp(-(m(z) - center)^2 / (2 scale^2)))
    #[arg(long)]
    pub sd_bump: Option<String>,

    /// CSV of pre-drawn resamples (columns r<slot>_<dim>) instead of a
    /// built-in sampler; for the finite mode the last slot carries the
    /// shared first coordinate
    #[arg(long)]
    pub resample_file: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum CalibrateCmd {
    /// Classifier calibration from predicted probabilities and labels
    Classify(ClassifyArgs),
    /// Gaussian regression-model calibration from means and variances
    Regress(RegressArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CalibMode {
    Asymptotic,
    Finite,
}

#[derive(Args)]
pub struct ClassifyArgs {
    pub input: PathBuf,

    #[command(flatten)]
    pub common: CommonArgs,

    #[arg(long, value_enum, default_value_t = CalibMode::Asymptotic)]
    pub mode: CalibMode,

    /// Resample count M for the finite-sample mode
    #[arg(long = "M", default_value_t = 99)]
    pub m: usize,

    /// Explicit probability columns (default: prefix p_)
    #[arg(long)]
    pub prob_cols: Option<String>,

    /// Label column of 0-based class indices
    #[arg(long, default_value = "label")]
    pub label_col: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConditioningArg {
    Mean,
    MeanVar,
}

#[derive(Args)]
pub struct RegressArgs {
    pub input: PathBuf,

    #[command(flatten)]
    pub common: CommonArgs,

    #[arg(long, value_enum, default_value_t = CalibMode::Asymptotic)]
    pub mode: CalibMode,

    #[arg(long = "M", default_value_t = 99)]
    pub m: usize,

    /// Condition on the predicted mean only (homoscedastic models) or on
    /// (mean, variance)
    #[arg(long, value_enum, default_value_t = ConditioningArg::Mean)]
    pub conditioning: ConditioningArg,

    #[arg(long, default_value = "y")]
    pub y_col: String,

    #[arg(long, default_value = "mean")]
    pub mean_col: String,

    /// Per-point variance column (default name: var, used when present)
    #[arg(long)]
    pub var_col: Option<String>,

    /// Constant variance overriding any variance column
    #[arg(long)]
    pub var: Option<f64>,
}

#[derive(Subcommand)]
pub enum SimCmd {
    /// Classifier calibration scenario: f1 ~ Beta(rho, 1-rho)
    ClassCalib(SimClassArgs),
    /// Regression calibration scenario: Y = rho sin(pi Z) + |1+Z| eps
    RegCalib(SimRegArgs),
    /// Goodness-of-fit scenario: Gaussian location model with a radial
    /// variance bump of height rho
    Gof(SimGofArgs),
    /// Discrete-covariate oracle with a closed-form population ECMMD
    Oracle(SimOracleArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HypothesisArg {
    Null,
    Alt,
}

#[derive(Args)]
pub struct SimClassArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    #[arg(long, default_value_t = 100)]
    pub n: usize,

    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,

    #[arg(long, value_enum, default_value_t = HypothesisArg::Null)]
    pub hypothesis: HypothesisArg,

    #[arg(long, value_enum, default_value_t = CalibMode::Asymptotic)]
    pub mode: CalibMode,

    #[arg(long = "M", default_value_t = 99)]
    pub m: usize,

    #[arg(long, default_value_t = 1)]
    pub reps: usize,

    /// Dump the first replicate's dataset to CSV (p_0, p_1, label)
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimRegArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    #[arg(long, default_value_t = 200)]
    pub n_train: usize,

    #[arg(long, default_value_t = 75)]
    pub n_test: usize,

    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,

    /// Fit the training regression with an intercept
    #[arg(long)]
    pub intercept: bool,

    #[arg(long, value_enum, default_value_t = CalibMode::Asymptotic)]
    pub mode: CalibMode,

    #[arg(long = "M", default_value_t = 99)]
    pub m: usize,

    #[arg(long, default_value_t = 1)]
    pub reps: usize,

    /// Dump the first replicate's test set to CSV (y, mean, var)
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimGofArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    #[arg(long, default_value_t = 350)]
    pub n: usize,

    #[arg(long, default_value_t = 3)]
    pub d: usize,

    #[arg(long, default_value_t = 10.0)]
    pub rho: f64,

    #[arg(long, value_enum, default_value_t = GofMode::Finite)]
    pub mode: GofMode,

    #[arg(long = "M", default_value_t = 300)]
    pub m: usize,

    #[arg(long = "Mn", default_value_t = 50)]
    pub m_n: usize,

    #[arg(long, default_value_t = 1)]
    pub reps: usize,

    /// Dump the first replicate's dataset to CSV (y_0, z_*)
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimOracleArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    #[arg(long, default_value_t = 800)]
    pub n: usize,

    #[arg(long, default_value_t = 1)]
    pub reps: usize,

    /// Dump the first replicate's dataset to CSV (x_*, y_*, z_*)
    #[arg(long)]
    pub dump: Option<PathBuf>,
}
