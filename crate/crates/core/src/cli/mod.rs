//! The `scalefit` command line.
//!
//! Every command writes its primary output deterministically; the wall-clock
//! time and the invoking command line go to a sidecar `<output>.log`.
//!
//! Exit codes: 0 success, 2 usage error, 3 unreadable or invalid input,
//! 4 computation failure, 5 a requested verification failed.

mod commands;

use crate::alignment::{Aggregate, AlignmentError};
use crate::allocation::AllocationError;
use crate::fit::{FitError, FitForm, XKind};
use crate::records::{Format, RecordsError, Region, Target};
use crate::report::{ReportError, Units};
use crate::synth::SynthError;
use crate::uncertainty::UncertaintyError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "scalefit", version, about = "Scaling-law fits, compute-optimal allocation and alignment scoring")]
pub struct Cli {
    /// Seed for every random choice. Falls back to SCALEFIT_SEED, then 0.
    #[arg(long, global = true, env = "SCALEFIT_SEED")]
    pub seed: Option<u64>,
    /// Do not write the sidecar .log file.
    #[arg(long, global = true)]
    pub no_log: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a run table, print a summary and optionally convert it.
    Ingest(IngestArgs),
    /// Fit a misalignment curve to a run table.
    Fit(FitArgs),
    /// Compute-optimal (N*, D*) for a budget from a joint fit.
    Allocate(AllocateArgs),
    /// Bootstrap confidence intervals for a fit.
    Bootstrap(BootstrapArgs),
    /// Score activations against neural or behavioral data.
    #[command(subcommand)]
    Score(ScoreCommand),
    /// Write synthetic inputs with known ground truth.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Summarize per-region fits into an alignment-gain table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClusterBy {
    Family,
    Arch,
    Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnitsArg {
    Raw,
    Rescaled,
}

impl From<UnitsArg> for Units {
    fn from(u: UnitsArg) -> Units {
        match u {
            UnitsArg::Raw => Units::Raw,
            UnitsArg::Rescaled => Units::Rescaled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct TableArgs {
    /// Run table (CSV or JSON).
    #[arg(long)]
    pub input: PathBuf,
    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Average rows that differ only in seed before use.
    #[arg(long)]
    pub average_seeds: bool,
    /// Named row filter, e.g. convnext_vit_restricted.
    #[arg(long)]
    pub filter: Option<String>,
    /// Keep only these families (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub families: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ScaleArgs {
    #[arg(long, default_value_t = 1e13)]
    pub c_scale: f64,
    #[arg(long, default_value_t = 1e5)]
    pub n_scale: f64,
    #[arg(long, default_value_t = 1e4)]
    pub d_scale: f64,
}

#[derive(Debug, Clone, Args)]
pub struct CurveArgs {
    /// power, shifted or joint.
    #[arg(long, default_value = "power")]
    pub form: FitForm,
    /// Run quantity on the x axis; required unless --form joint.
    #[arg(long = "x")]
    pub x: Option<XKind>,
    /// v1, v2, v4, it, behavior, brain (mean of the four regions) or mean (all five).
    #[arg(long, default_value = "mean")]
    pub target: Target,
    /// Huber knee.
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
    /// Keep lambda at its grid value instead of optimizing it.
    #[arg(long)]
    pub freeze_lambda: bool,
    /// Group label recorded in the report (used by `report`).
    #[arg(long)]
    pub group: Option<String>,
    #[command(flatten)]
    pub scale: ScaleArgs,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub table: TableArgs,
    /// Write the validated table here (format from the extension).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub table: TableArgs,
    #[command(flatten)]
    pub curve: CurveArgs,
    /// Fit report path.
    #[arg(long)]
    pub output: PathBuf,
    /// Also write <PREFIX>.csv with (x, L, S) samples and <PREFIX>.svg.
    #[arg(long, value_name = "PREFIX")]
    pub emit_curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AllocateArgs {
    /// Joint fit report.
    #[arg(long)]
    pub fit: PathBuf,
    /// Compute model report.
    #[arg(long, conflicts_with_all = ["fit_compute_model", "m"])]
    pub compute_model: Option<PathBuf>,
    /// Fit the compute model to this run table.
    #[arg(long, conflicts_with = "m")]
    pub fit_compute_model: Option<PathBuf>,
    /// Fixed compute model C = m (N D)^n in raw units.
    #[arg(long, requires = "n")]
    pub m: Option<f64>,
    /// Exponent of the fixed compute model.
    #[arg(long, requires = "m")]
    pub n: Option<f64>,
    /// Where to save an inline-fitted compute model.
    #[arg(long)]
    pub compute_model_out: Option<PathBuf>,
    /// Compute budget C.
    #[arg(long, allow_hyphen_values = true)]
    pub budget: f64,
    /// Units of the budget and of the reported N*, D*.
    #[arg(long, value_enum, default_value = "raw")]
    pub units: UnitsArg,
    /// Check the closed form against a brute-force search along the budget curve.
    #[arg(long)]
    pub verify: bool,
    #[arg(long, default_value_t = crate::allocation::BRUTE_FORCE_POINTS)]
    pub grid_points: usize,
    /// Allocation report path.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub table: TableArgs,
    #[command(flatten)]
    pub curve: CurveArgs,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    /// Confidence level.
    #[arg(long, default_value_t = 0.95)]
    pub ci: f64,
    /// Start each refit from the full-data optimum instead of the whole grid.
    #[arg(long)]
    pub warm_start: bool,
    /// Resample whole groups of runs instead of single runs.
    #[arg(long, value_enum)]
    pub cluster_by: Option<ClusterBy>,
    /// Number of curve points with intervals.
    #[arg(long, default_value_t = 50)]
    pub curve_points: usize,
    /// Bootstrap report path.
    #[arg(long)]
    pub output: PathBuf,
    /// Also write the curve with its band as <PREFIX>.csv and <PREFIX>.svg.
    #[arg(long, value_name = "PREFIX")]
    pub emit_curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AppendArgs {
    /// Merge the ceiled score into this run table.
    #[arg(long, requires = "run_id")]
    pub append_to: Option<PathBuf>,
    #[arg(long)]
    pub run_id: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum ScoreCommand {
    /// Cross-validated linear readout against recordings.
    Neural(NeuralArgs),
    /// Classifier confusion pattern against a reference pattern.
    Behavior(BehaviorArgs),
}

#[derive(Debug, Clone, Args)]
pub struct NeuralArgs {
    /// stim_id,f0,f1,...
    #[arg(long)]
    pub activations: PathBuf,
    /// stim_id,n0,n1,...
    #[arg(long)]
    pub recordings: PathBuf,
    #[arg(long)]
    pub region: Region,
    #[arg(long)]
    pub ceiling: f64,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0.9)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    #[arg(long, default_value = "median")]
    pub aggregate: Aggregate,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub append: AppendArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BehaviorArgs {
    #[arg(long)]
    pub train_features: PathBuf,
    /// stim_id,label
    #[arg(long)]
    pub train_labels: PathBuf,
    #[arg(long)]
    pub test_features: PathBuf,
    #[arg(long)]
    pub test_labels: PathBuf,
    /// image_id,class,probability
    #[arg(long)]
    pub pattern: PathBuf,
    #[arg(long)]
    pub ceiling: f64,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub append: AppendArgs,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Run table following one curve (grids in rescaled units, log10 bounds).
    Curve(SimCurveArgs),
    /// Run table where each region follows its own power law in compute.
    Regions(SimRegionsArgs),
    /// Activation and recording matrices from a random linear map.
    Benchmark(SimBenchmarkArgs),
    /// Gaussian-blob classification task with a reference pattern.
    Behavior(SimBehaviorArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimCurveArgs {
    #[arg(long, default_value = "power")]
    pub form: FitForm,
    #[arg(long = "x", default_value = "flops")]
    pub x: XKind,
    #[arg(long = "E")]
    pub e: f64,
    #[arg(long = "A")]
    pub a: f64,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    #[arg(long = "B")]
    pub b: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// log10 of the smallest rescaled x (or N for joint).
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
    pub hi: f64,
    #[arg(long, default_value_t = 30)]
    pub points: usize,
    /// Joint form: log10 bounds and count of the rescaled D grid.
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub d_lo: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pub d_hi: f64,
    #[arg(long, default_value_t = 10)]
    pub d_points: usize,
    /// Joint form: use {1,3,10,30,100,300} x CLASSES samples for D instead.
    #[arg(long, value_name = "CLASSES")]
    pub subsampling: Option<u64>,
    /// Log-normal noise on L.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value = "Synthetic")]
    pub family: String,
    #[command(flatten)]
    pub scale: ScaleArgs,
    #[arg(long)]
    pub output: PathBuf,
    /// Also write the generator and its true parameters as JSON.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimRegionsArgs {
    /// REGION:E:A:alpha, repeatable.
    #[arg(long = "region", required = true)]
    pub regions: Vec<String>,
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
    pub hi: f64,
    #[arg(long, default_value_t = 30)]
    pub points: usize,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1e13)]
    pub c_scale: f64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimBenchmarkArgs {
    #[arg(long, default_value_t = 500)]
    pub stimuli: usize,
    #[arg(long, default_value_t = 10)]
    pub features: usize,
    #[arg(long, default_value_t = 20)]
    pub neuroids: usize,
    /// Recording noise standard deviation.
    #[arg(long, conflicts_with = "target_r")]
    pub noise: Option<f64>,
    /// Pick the noise so each neuroid's signal/total SD ratio is this.
    #[arg(long)]
    pub target_r: Option<f64>,
    #[arg(long, default_value = "it")]
    pub region: Region,
    #[arg(long, default_value_t = 1.0)]
    pub ceiling: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimBehaviorArgs {
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 8)]
    pub features: usize,
    #[arg(long, default_value_t = 540)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 60)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = 1.5)]
    pub separation: f64,
    #[arg(long, default_value_t = 0.0)]
    pub pattern_noise: f64,
    #[arg(long, default_value_t = 1.0)]
    pub ceiling: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Per-region power-law fit reports.
    #[arg(num_args = 1.., required = true, value_name = "FIT")]
    pub fits: Vec<PathBuf>,
    /// Regions that must be present (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub require: Vec<Region>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: TableFormat,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Records(#[from] RecordsError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error(transparent)]
    Bootstrap(#[from] UncertaintyError),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Records(_) | CliError::Report(_) => 3,
            CliError::Alignment(
                AlignmentError::Shape(_) | AlignmentError::File { .. } | AlignmentError::NonFinite { .. },
            ) => 3,
            CliError::Synth(SynthError::Records(_)) => 3,
            CliError::Fit(_)
            | CliError::Allocation(_)
            | CliError::Bootstrap(_)
            | CliError::Alignment(_)
            | CliError::Synth(_) => 4,
            CliError::Verification(_) => 5,
        }
    }
}

/// Run a parsed command line. `argv` is recorded in the sidecar log.
pub fn run(cli: Cli, argv: &[String]) -> Result<(), CliError> {
    let mut ctx = commands::Ctx::new(cli.seed.unwrap_or(0), !cli.no_log, argv.to_vec());
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(&mut ctx, &a),
        Command::Fit(a) => commands::fit(&mut ctx, &a),
        Command::Allocate(a) => commands::allocate(&mut ctx, &a),
        Command::Bootstrap(a) => commands::bootstrap(&mut ctx, &a),
        Command::Score(ScoreCommand::Neural(a)) => commands::score_neural(&mut ctx, &a),
        Command::Score(ScoreCommand::Behavior(a)) => commands::score_behavior(&mut ctx, &a),
        Command::Simulate(SimulateCommand::Curve(a)) => commands::simulate_curve(&mut ctx, &a),
        Command::Simulate(SimulateCommand::Regions(a)) => commands::simulate_regions(&mut ctx, &a),
        Command::Simulate(SimulateCommand::Benchmark(a)) => commands::simulate_benchmark(&mut ctx, &a),
        Command::Simulate(SimulateCommand::Behavior(a)) => commands::simulate_behavior(&mut ctx, &a),
        Command::Report(a) => commands::report(&mut ctx, &a),
    };
    result?;
    ctx.finish()
}

/// Parse, run and map the outcome to a process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
