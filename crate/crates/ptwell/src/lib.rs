//! Command-line front end over `ptwell-core`.
//!
//! Exit codes: 0 success, 1 verification failure, 2 bad input, 3 backend unsupported for
//! the well, 4 too few usable levels after excluding near-degenerate roots.

pub mod commands;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("verification failed")]
    Failed,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed => 1,
            CliError::Input(_) => 2,
            CliError::Unsupported(_) => 3,
            CliError::Degenerate(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ptwell", version, about = "Square well with imaginary delta pairs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Real bound-state roots below --kmax.
    Spectrum(SpectrumArgs),
    /// Levels continued in the coupling strength.
    Sweep(SweepArgs),
    /// Robust/fragile tags of the lowest levels.
    Classify(ClassifyArgs),
    /// Metric diagnostics of the two-component representation (JSON).
    Metric(MetricArgs),
    /// Determinant cross-checks (JSON); exit 0 iff all pass.
    Verify(VerifyArgs),
    /// Samples of one eigenfunction.
    Wavefunction(WavefunctionArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Matrix,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OmegaArg {
    Unit,
    #[value(name = "inv-mu2")]
    InvMu2,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    pub specfile: PathBuf,
    #[arg(long, default_value_t = 20.0)]
    pub kmax: f64,
    #[arg(long, value_enum, default_value_t = BackendArg::Matrix)]
    pub backend: BackendArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub specfile: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub xi_from: f64,
    #[arg(long)]
    pub xi_to: f64,
    #[arg(long, default_value_t = 101)]
    pub steps: usize,
    #[arg(long, default_value_t = 6)]
    pub levels: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    pub specfile: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub levels: usize,
    #[arg(long, default_value_t = 40.0)]
    pub xi_max: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    pub specfile: PathBuf,
    #[arg(long, default_value_t = 12)]
    pub trunc: usize,
    #[arg(long, default_value_t = 1024)]
    pub grid: usize,
    #[arg(long, value_enum, default_value_t = OmegaArg::InvMu2)]
    pub omega: OmegaArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub specfile: PathBuf,
    #[arg(long, default_value_t = ptwell_core::verify::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WavefunctionArgs {
    pub specfile: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub level: usize,
    #[arg(long, default_value_t = 201)]
    pub samples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Result of a command: the document to write and whether it signals failure.
pub struct Outcome {
    pub text: String,
    pub out: Option<PathBuf>,
    pub error: Option<CliError>,
}

/// Parses `args` (program name first) and runs the command, writing its document to
/// `--out` or stdout. Returns the exit code.
pub fn run(args: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let provenance = format!("# ptwell {VERSION} {}", args.iter().skip(1).cloned().collect::<Vec<_>>().join(" "));
    let result = threads().and_then(|pool| pool.install(|| commands::execute(&cli.command, &provenance)));
    match result {
        Ok(outcome) => {
            if let Err(e) = emit(&outcome) {
                eprintln!("ptwell: {e}");
                return 2;
            }
            match outcome.error {
                Some(e) => {
                    eprintln!("ptwell: {e}");
                    e.exit_code()
                }
                None => 0,
            }
        }
        Err(e) => {
            eprintln!("ptwell: {e}");
            e.exit_code()
        }
    }
}

fn emit(outcome: &Outcome) -> Result<(), CliError> {
    match &outcome.out {
        Some(p) => std::fs::write(p, &outcome.text)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{}", outcome.text);
            Ok(())
        }
    }
}

/// Thread pool sized by `PTWELL_THREADS` (unset or 0: one thread per core).
fn threads() -> Result<rayon::ThreadPool, CliError> {
    let n = match std::env::var("PTWELL_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Input(format!("PTWELL_THREADS must be a non-negative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::Input(format!("thread pool: {e}")))
}
