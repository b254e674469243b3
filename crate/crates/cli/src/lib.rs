//! The `rqnls` command line: simulations, the verification suite and the
//! experiments, all driven by a strict TOML run configuration.

pub mod checkpoint;
mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{initial_snapshot, run_resonant};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECKS_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ABORT: i32 = 3;

/// How a command ended when it did not succeed.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or configuration.
    Usage(String),
    /// The verification suite reported failures.
    Checks(String),
    /// The run stopped: non-finite values, contamination abort, i/o.
    Abort(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Checks(_) => EXIT_CHECKS_FAILED,
            Failure::Abort(_) => EXIT_ABORT,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Checks(m) | Failure::Abort(m) => m,
        }
    }
}

impl From<config::ConfigErrors> for Failure {
    fn from(e: config::ConfigErrors) -> Self {
        Failure::Usage(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "rqnls", version, about = "Resonant quintic NLS systems and the quintic NLS on R x T")]
#[command(arg_required_else_help = true, propagate_version = true)]
pub struct Cli {
    /// Worker threads (default: RQNLS_THREADS, else the hardware count).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a configured system and write diagnostics and checkpoints.
    Simulate(SimulateArgs),
    /// Run the verification suite.
    Verify(VerifyArgs),
    /// List the resonant tuples of a mode.
    Resonances(ResonancesArgs),
    /// Time the direct and lifted nonlinearity evaluators.
    BenchNonlinearity(BenchArgs),
    /// Numerical experiments.
    #[command(subcommand, arg_required_else_help = true)]
    Experiment(Experiment),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SystemArg {
    Resonant1d,
    Resonant2d,
    Cylinder,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Must agree with `system` in the configuration when given.
    #[arg(long, value_enum)]
    pub system: Option<SystemArg>,
    /// Output directory (default: `output` in the configuration).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from a checkpoint up to the configured `T`.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value = "default", value_parser = ["fast", "default", "full"])]
    pub suite: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also run the suite against each canned defect; every one must be caught.
    #[arg(long)]
    pub mutations: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ResonancesArgs {
    #[arg(long, value_parser = ["1", "2"])]
    pub dim: String,
    /// Output mode, comma separated for dim 2 (e.g. `1,-2`).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1..=2)]
    pub j: Vec<i64>,
    #[arg(long)]
    pub cutoff: i64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Cutoffs to time, comma separated.
    #[arg(long = "J", value_delimiter = ',', required = true)]
    pub cutoffs: Vec<i64>,
    #[arg(long = "Nx", default_value_t = 256)]
    pub nx: usize,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub dim: u8,
    /// Evaluations per method; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Experiment {
    /// Compare cylinder solutions with the resonant profile over a ladder of scales.
    Approx(ApproxArgs),
    /// Cauchy defects and the space-time norm tail of a small-data run.
    Scatter(ScatterArgs),
}

#[derive(Debug, Args)]
pub struct ApproxArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Scales, comma separated (default: `symmetry.lambdas`).
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ScatterArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if let Some(n) = flag {
        return if n == 0 {
            Err(Failure::Usage("--threads must be positive".into()))
        } else {
            Ok(Some(n))
        };
    }
    match std::env::var("RQNLS_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Failure::Usage(format!("RQNLS_THREADS = {v:?} is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = thread_count(cli.threads)? {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Resonances(a) => commands::resonances(&a),
        Command::BenchNonlinearity(a) => commands::bench(&a),
        Command::Experiment(Experiment::Approx(a)) => commands::approx(&a),
        Command::Experiment(Experiment::Scatter(a)) => commands::scatter(&a),
    }
}
