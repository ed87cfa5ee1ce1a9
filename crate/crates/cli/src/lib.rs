//! Command-line front end: audio decomposition, kernel inspection and
//! reconstruction from coefficient files.

pub mod coef;
pub mod decompose;
pub mod error;
pub mod kernels;
pub mod reconstruct;
pub mod wav;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mgmp::GaborDictParams;

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "mgmp", version, about = "Matching pursuit over multi-Gabor dictionaries")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decompose a WAV file into Gabor atoms.
    Decompose(DecomposeArgs),
    /// Print truncated kernel footprints and memory use.
    Kernels(KernelArgs),
    /// Synthesize audio from a coefficient file.
    Reconstruct(ReconstructArgs),
}

fn parse_dict(s: &str) -> Result<GaborDictParams, String> {
    s.parse().map_err(|e: mgmp::MpError| e.to_string())
}

/// Kernel truncation threshold, relative to each kernel's peak.
#[derive(Debug, Clone, Args)]
pub struct ThresholdArgs {
    /// Relative threshold (default 1e-4).
    #[arg(long, conflicts_with = "kernthr_db")]
    pub kernthr: Option<f64>,
    /// Threshold in dB below the peak, e.g. -80.
    #[arg(long = "kernthr-db", allow_negative_numbers = true)]
    pub kernthr_db: Option<f64>,
}

impl ThresholdArgs {
    pub fn value(&self) -> CliResult<f64> {
        let eps = match (self.kernthr, self.kernthr_db) {
            (Some(e), _) => e,
            (None, Some(db)) => 10f64.powf(db / 20.0),
            (None, None) => 1e-4,
        };
        if !(eps.is_finite() && (0.0..1.0).contains(&eps)) {
            return Err(CliError::Usage(format!("kernel threshold {eps} outside [0, 1)")));
        }
        Ok(eps)
    }
}

#[derive(Debug, Clone, Args)]
pub struct DecomposeArgs {
    /// Input WAV (16/24-bit PCM or 32-bit float).
    pub input: PathBuf,
    /// Dictionary `kind:M:a[:gl]`; repeat for several.
    #[arg(long = "dict", required = true, value_parser = parse_dict)]
    pub dicts: Vec<GaborDictParams>,
    /// Output directory, created if missing.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Target error estimate in dB relative to the input energy.
    #[arg(long, default_value_t = -40.0, allow_negative_numbers = true)]
    pub errdb: f64,
    /// Selection limit (default L/5).
    #[arg(long)]
    pub maxit: Option<usize>,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    /// Select by the exact pair energy instead of |c|^2.
    #[arg(long)]
    pub pedantic: bool,
    /// Enable exact residual resets.
    #[arg(long)]
    pub reset: bool,
    /// Selections between resets.
    #[arg(long, requires = "reset")]
    pub resetit: Option<usize>,
    /// Reset once the estimate drops this many dB below the last exact error.
    #[arg(long, requires = "reset", allow_negative_numbers = true)]
    pub reseterrdb: Option<f64>,
    /// Drift tolerance of the reset condition.
    #[arg(long, default_value_t = 0.4)]
    pub resetdelta: f64,
    /// Write per-step condition flags with true residual energies.
    #[arg(long)]
    pub diagnose: bool,
    /// Kernel cache file, loaded when it matches and rewritten otherwise.
    #[arg(long = "kernel-cache")]
    pub kernel_cache: Option<PathBuf>,
    /// Zero-based channel of a multi-channel input.
    #[arg(long, default_value_t = 0)]
    pub channel: u16,
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    /// Dictionary `kind:M:a[:gl]`; repeat for several.
    #[arg(long = "dict", required = true, value_parser = parse_dict)]
    pub dicts: Vec<GaborDictParams>,
    #[command(flatten)]
    pub threshold: ThresholdArgs,
    /// Directory for per-pair CSV grids of magnitudes in dB.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReconstructArgs {
    /// Coefficient file written by `decompose`.
    pub coefs: PathBuf,
    /// Output WAV.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Expected dictionaries; must match the file when given.
    #[arg(long = "dict", value_parser = parse_dict)]
    pub dicts: Vec<GaborDictParams>,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Decompose(a) => decompose::run(&a).map(|_| ()),
        Command::Kernels(a) => kernels::run(&a, &mut std::io::stdout().lock()),
        Command::Reconstruct(a) => reconstruct::run(&a),
    }
}
