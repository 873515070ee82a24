mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Samplers and checks for fractional Brownian motion on a discrete grid.
///
/// Settings may also come from `--config FILE`, a text file with one
/// `key=value` per line (keys are flag names without dashes). Explicit flags
/// override the file, which overrides built-in defaults. `--threads` falls
/// back to the FRACLATTICE_THREADS environment variable.
///
/// Exit codes: 0 success, 1 verification failure, 2 usage error,
/// 3 runtime error.
#[derive(Debug, Parser)]
#[command(name = "fraclattice", version, args_override_self = true)]
pub struct Cli {
    /// Worker threads for Monte Carlo work.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw sample paths and write them as CSV.
    Sample(SampleArgs),
    /// Run a verification suite and print a pass/fail table.
    Verify(VerifyArgs),
    /// Fit the tree sampler to the exact increment covariance.
    Calibrate(CalibrateArgs),
    /// Time the samplers over a range of sizes.
    Bench(BenchArgs),
    /// Re-run the command recorded in a `.meta.json` sidecar.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Lightcone,
    Cholesky,
    Circulant,
    Tree,
    Multifractal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Multiplier {
    Lognormal,
    Cascade,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Number of increments [default: 64, or the leaf count of --params].
    #[arg(long)]
    pub n: Option<usize>,
    /// Time step; defaults to 1/n (unit horizon).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Hurst index in (0, 1).
    #[arg(long, default_value_t = 0.7)]
    pub hurst: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Circuit depth [default: n², or 4n for the multifractal suite].
    #[arg(long)]
    pub depth: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[arg(long, value_enum, default_value = "lightcone")]
    pub method: Method,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// CSV destination; standard output when absent (no sidecar then).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Calibrated tree parameters (JSON) for `--method tree`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "lognormal")]
    pub multiplier: Multiplier,
    /// Lognormal volatility λ.
    #[arg(long, default_value_t = 0.3)]
    pub lambda: f64,
    /// Cascade weight m0 in (0, 1).
    #[arg(long, default_value_t = 0.6)]
    pub m0: f64,
    /// Cascade levels.
    #[arg(long, default_value_t = 8)]
    pub levels: u32,
    /// Seed of the multiplier paths; defaults to --seed.
    #[arg(long)]
    pub multiplier_seed: Option<u64>,
    /// Share one multiplier path across all samples.
    #[arg(long)]
    pub frozen_multiplier: bool,
    /// Exponent p of the τ^{-p} factor in the multifractal couplings;
    /// defaults to 2 − 2H.
    #[arg(long)]
    pub decay_exponent: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Identities,
    Covariance,
    Scaling,
    Multifractal,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Monte Carlo sample count.
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Relative truncation-error bound for the covariance suite.
    #[arg(long, default_value_t = 0.05)]
    pub tol: f64,
    /// Table destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Target relative Frobenius error.
    #[arg(long, default_value_t = 0.1)]
    pub tol: f64,
    /// Coordinate-descent sweeps.
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value = "params.json")]
    pub out: PathBuf,
    /// Exit 1 when the tolerance is not reached.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Comma-separated methods: cholesky, circulant, tree, lightcone.
    #[arg(long, value_delimiter = ',', default_value = "cholesky,circulant,tree")]
    pub methods: Vec<String>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "256,512,1024")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.7)]
    pub hurst: f64,
    /// Timing CSV destination; slopes go next to it as `.slopes.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Sidecar written by an earlier `sample` run.
    pub meta: PathBuf,
    /// Write here instead of the recorded destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    match commands::run(argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if let Some(m) = f.message() {
                eprintln!("fraclattice: {m}");
            }
            ExitCode::from(f.code())
        }
    }
}
