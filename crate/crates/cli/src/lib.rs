//! Command-line front end: argument parsing, configuration merging and exit
//! codes. Each subcommand lives in [`commands`].
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fastdecomp::dataio::PreprocessConfig;
use serde::{Deserialize, Serialize};

pub mod commands;
pub mod run;

use run::{CmdResult, Failure, RunContext};

/// Environment variable read when `--jobs` is not given.
pub const JOBS_ENV: &str = "FASTDECOMP_JOBS";

#[derive(Debug, Parser)]
#[command(name = "fastdecomp", version, about = "Sparse and decomposable Gaussian graphical models")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = JOBS_ENV)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one estimator to one dataset.
    Estimate(EstimateArgs),
    /// Leave-one-subject-out cross-validation over a hyperparameter grid.
    Cv(CvArgs),
    /// Summary statistics of a graph.
    Metrics(MetricsArgs),
    /// Generate synthetic subjects from a sparse ground-truth precision.
    Simulate(SimulateArgs),
    /// Detrend, filter, regress confounds and standardize a dataset.
    Preprocess(PreprocessArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run directory; every output file is written inside it.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON configuration file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct EstimatorFlags {
    /// ledoit-wolf, shrinkage, graphical-lasso, fast-decomp or pc-dag.
    #[arg(long)]
    pub method: Option<String>,
    /// Edge-test threshold of the decomposable fit.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Penalty of the shrinkage and graphical lasso estimators.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Significance level of the PC tests.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub max_condition_size: Option<usize>,
    /// Graphical lasso duality-gap tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Graphical lasso sweep limit.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Apply the default per-subject preprocessing (or the config's).
    #[arg(long)]
    pub preprocess: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub estimator: EstimatorFlags,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub common: Common,
    /// One dataset CSV per subject.
    #[arg(long, num_args = 1..)]
    pub subjects: Vec<PathBuf>,
    /// Directory whose `*.csv` files are the subjects, in name order.
    #[arg(long)]
    pub subject_dir: Option<PathBuf>,
    #[command(flatten)]
    pub estimator: EstimatorFlags,
    /// Comma-separated hyperparameter grid (defaults per method).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Edge-list CSV or graph JSON.
    #[arg(long)]
    pub graph: PathBuf,
    /// Node count for edge lists (defaults to the largest index plus one).
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// watts-strogatz or blocks.
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub rewire_prob: Option<f64>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub block_size: Option<usize>,
    /// Largest off-diagonal magnitude of the ground-truth precision.
    #[arg(long)]
    pub strength: Option<f64>,
    /// Samples per subject.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: PathBuf,
    /// Confound time courses, one column per confound.
    #[arg(long)]
    pub confounds: Option<PathBuf>,
    /// The confound file starts with a header row.
    #[arg(long)]
    pub confounds_header: bool,
    #[arg(long, conflicts_with = "no_detrend")]
    pub detrend_order: Option<usize>,
    #[arg(long)]
    pub no_detrend: bool,
    /// Pass band LOW,HIGH in cycles per sample.
    #[arg(long, value_delimiter = ',')]
    pub band: Option<Vec<f64>>,
    #[arg(long)]
    pub no_standardize: bool,
}

/// Every key a configuration file may set. Unknown keys are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub method: Option<String>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub max_condition_size: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub ips_tol: Option<f64>,
    pub ips_max_iter: Option<usize>,
    pub grid: Option<Vec<f64>>,
    pub preprocess: Option<PreprocessConfig>,
    pub confounds_header: Option<bool>,
    pub generator: Option<String>,
    pub p: Option<usize>,
    pub k: Option<usize>,
    pub rewire_prob: Option<f64>,
    pub blocks: Option<usize>,
    pub block_size: Option<usize>,
    pub strength: Option<f64>,
    pub n: Option<usize>,
    pub subjects: Option<usize>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> CmdResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => fastdecomp::io::read_json(p)
                .map_err(|e| Failure::data(format!("config {}: {e}", p.display()))),
        }
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code. Diagnostics go to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { run::EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let outcome = match cli.jobs {
        Some(0) => Err(Failure::usage("--jobs must be at least 1")),
        Some(j) => match rayon::ThreadPoolBuilder::new().num_threads(j).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command, argv)),
            Err(e) => Err(Failure::data(format!("thread pool: {e}"))),
        },
        None => dispatch(cli.command, argv),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command, argv: Vec<String>) -> CmdResult<()> {
    let (name, out) = match &command {
        Command::Estimate(a) => ("estimate", &a.common.out),
        Command::Cv(a) => ("cv", &a.common.out),
        Command::Metrics(a) => ("metrics", &a.out),
        Command::Simulate(a) => ("simulate", &a.common.out),
        Command::Preprocess(a) => ("preprocess", &a.common.out),
    };
    let mut ctx = RunContext::create(out, name, argv)?;
    let outcome = match command {
        Command::Estimate(a) => commands::estimate(&a, &mut ctx),
        Command::Cv(a) => commands::cv(&a, &mut ctx),
        Command::Metrics(a) => commands::metrics(&a, &mut ctx),
        Command::Simulate(a) => commands::simulate(&a, &mut ctx),
        Command::Preprocess(a) => commands::preprocess(&a, &mut ctx),
    };
    ctx.finish(&outcome)?;
    outcome
}
