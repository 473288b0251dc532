use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigFlags, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "spartsm", version, about = "Estimate, test and localize changes in time-varying exponential families")]
pub struct Cli {
    /// Worker threads [default: all cores].
    #[arg(long, global = true, env = "SPARTSM_THREADS", value_name = "N")]
    pub threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug) [default: warnings only].
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a dataset and write dataset.csv and truth.json.
    Simulate(SimulateArgs),
    /// Fit the sparse differential parameter and write fit.json.
    Fit(FitArgs),
    /// Debiased tests and confidence intervals; writes report.json.
    Infer(InferArgs),
    /// Detect change periods; writes change.json and stat.csv.
    Changepoint(ChangepointArgs),
    /// Simulation studies of estimation and inference quality.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// Support recovery ROC curves and AUC.
    Roc(RocArgs),
    /// Confidence interval miss rates.
    Coverage(CoverageArgs),
    /// Rejection rate against the size of a change.
    Power(PowerArgs),
    /// Kolmogorov-Smirnov check of standardized residuals.
    Normality(NormalityArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimModel {
    /// Gaussian graphical model with sine changes on a sparse random mask.
    GgmSine,
    /// Gaussian graphical model with linear ramps on a sparse random mask.
    GgmLinear,
    /// Unit ramps on the first off-diagonal and node 0's first edges.
    GgmInference,
    /// Linear-ramp model restricted to the positive orthant.
    TruncatedGgm,
    /// Binary pairwise model with sine couplings, Gibbs sampled.
    Ising,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Features {
    /// Pairwise products x_i x_j for i <= j.
    Gaussian,
    /// Pairwise products x_i x_j for i < j.
    Ising,
    /// The observations themselves.
    Identity,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutArg {
    /// Grouped when a time stamp repeats, paired otherwise.
    Auto,
    Paired,
    Grouped,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = SimModel::GgmSine)]
    pub model: SimModel,
    /// Number of variables.
    #[arg(long, default_value_t = 20)]
    pub d: usize,
    /// Observations (per block when --blocks is set).
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Draw this many equispaced time blocks instead of paired data [default: paired].
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Edge change probability [default: 0.02 sine, 0.023 linear, 0.2 truncated].
    #[arg(long)]
    pub p: Option<f64>,
    /// Gibbs sweeps per Ising sample.
    #[arg(long, default_value_t = 200)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub flags: ConfigFlags,
}

/// How to read a dataset CSV (`t,x1,...,xd`).
#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct DataArgs {
    /// Dataset CSV with header t,x1,...,xd.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LayoutArg::Auto)]
    pub layout: LayoutArg,
    /// Raw time domain 'start,end' [default: range of the time column].
    #[arg(long)]
    pub domain: Option<String>,
    /// Sufficient statistics.
    #[arg(long, value_enum, default_value_t = Features::Gaussian)]
    pub features: Features,
}

/// Conditional-expectation options for paired data.
#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SmoothingArgs {
    /// Kernel bandwidth on the unit time scale [default: 1.06 sd(t) n^(-1/5)].
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Exclude each row from its own kernel average.
    #[arg(long, default_value_t = false)]
    pub leave_one_out: bool,
    /// Replace the kernel smoother with block means over this many equal-width bins [default: off].
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct SolverArgs {
    /// Maximum proximal-gradient iterations.
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    /// Relative change tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub smoothing: SmoothingArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    /// Time basis: 'linear' or 'fourier:B' with B even.
    #[arg(long, default_value = "linear")]
    pub basis: String,
    /// Penalty: 'auto' (sqrt(2 ln p / n)), 'sigma' (noise-scaled) or a number.
    #[arg(long, default_value = "auto")]
    pub lambda: String,
    /// Output file.
    #[arg(long, default_value = "fit.json")]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub flags: ConfigFlags,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct InferArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub smoothing: SmoothingArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver: SolverArgs,
    /// Lasso penalty: 'auto', 'sigma' or a number.
    #[arg(long, default_value = "auto")]
    pub lambda: String,
    /// Inverse-Hessian penalty [default: sqrt(ln k / n)].
    #[arg(long)]
    pub lambda_j: Option<f64>,
    /// Feature indices to test, comma separated, or 'all' (d <= 30 only).
    #[arg(long, default_value = "all")]
    pub targets: String,
    /// Two-sided test level; intervals have coverage 1 - level.
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
    /// Output file.
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub flags: ConfigFlags,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ChangepointArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Time basis: 'linear' or 'fourier:B' with B even.
    #[arg(long, default_value = "fourier:4")]
    pub basis: String,
    /// Bins used to group paired data.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Penalty: 'auto', 'sigma' or a number.
    #[arg(long, default_value = "0")]
    pub lambda: String,
    /// Pointwise test level.
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    /// Drop intervals narrower than this.
    #[arg(long, default_value_t = 0.01)]
    pub eps_sp: f64,
    /// Merge intervals separated by less than this.
    #[arg(long, default_value_t = 0.02)]
    pub eps_pp: f64,
    /// Equispaced evaluation points on the unit time scale.
    #[arg(long, default_value_t = 200)]
    pub grid: usize,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub flags: ConfigFlags,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RocModelArg {
    LinearGgm,
    SineGgm,
    TruncatedGgm,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct RocArgs {
    #[arg(long, value_enum, default_value_t = RocModelArg::LinearGgm)]
    pub model: RocModelArg,
    /// Edge change probability for the truncated model.
    #[arg(long, default_value_t = 0.2)]
    pub p: f64,
    /// Number of variables (40 reproduces the full-size study).
    #[arg(long, default_value_t = 20)]
    pub d: usize,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    /// Penalty values per ROC path.
    #[arg(long, default_value_t = 30)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    pub flags: ConfigFlags,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SettingArg {
    Deterministic,
    Random,
}

/// Options shared by the inference studies.
#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct StudyArgs {
    #[arg(long, default_value_t = 20)]
    pub d: usize,
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    /// Test level.
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
    /// Use the lasso penalty for the inverse-Hessian columns too.
    #[arg(long, default_value_t = false)]
    pub lambda_j_equals_lasso: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct CoverageArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub study: StudyArgs,
    #[arg(long, value_enum, default_value_t = SettingArg::Deterministic)]
    pub setting: SettingArg,
    /// Edge change probability for the random setting.
    #[arg(long, default_value_t = 0.2)]
    pub p: f64,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[command(flatten)]
    #[serde(skip)]
    pub flags: ConfigFlags,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct PowerArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub study: StudyArgs,
    /// Slopes of the tested edge, comma separated.
    #[arg(long, default_value = "0,1,2,3,4,5,6,7,8,9,10")]
    pub effects: String,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[command(flatten)]
    #[serde(skip)]
    pub flags: ConfigFlags,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct NormalityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub study: StudyArgs,
    #[arg(long, value_enum, default_value_t = SettingArg::Deterministic)]
    pub setting: SettingArg,
    /// Edge change probability for the random setting.
    #[arg(long, default_value_t = 0.2)]
    pub p: f64,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    /// Check residuals from this one-column CSV instead of simulating [default: simulate].
    #[arg(long)]
    pub residuals: Option<PathBuf>,
    #[command(flatten)]
    #[serde(skip)]
    pub flags: ConfigFlags,
}

macro_rules! run_config {
    ($($t:ty),*) => {
        $(impl RunConfig for $t {
            fn config_flags(&self) -> &ConfigFlags {
                &self.flags
            }

            fn set_config_flags(&mut self, flags: ConfigFlags) {
                self.flags = flags;
            }
        })*
    };
}

run_config!(SimulateArgs, FitArgs, InferArgs, ChangepointArgs, RocArgs, CoverageArgs, PowerArgs, NormalityArgs);
