//! `cavlattice`: simulate, fit and analyze ring-cavity probe transmission
//! spectra.
//!
//! ```bash
//! cavlattice simulate --ladder --out traces/
//! cavlattice fit traces/trace_*.csv --out fits/
//! cavlattice analyze fits/results.toml --out fits/
//! ```
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 I/O error,
//! 3 numerical failure.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cavlattice::io::{read_config, RunConfig};

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "CAVLATTICE_CONFIG";

#[derive(Parser)]
#[command(name = "cavlattice", version, about, long_about = None)]
struct Cli {
    /// Run configuration (TOML); built-in defaults when absent
    #[arg(long, short, global = true, env = CONFIG_ENV, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Verbosity (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic spectra, one CSV per atom number
    Simulate(SimulateArgs),
    /// Fit spectra and write a results document plus fitted curves
    Fit(FitArgs),
    /// Summarize a results document: regression, coupling regime, S spread
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("atoms").required(true).args(["n_atoms", "ladder"])))]
pub struct SimulateArgs {
    /// Atom numbers, comma separated
    #[arg(long, value_delimiter = ',', value_name = "N,...")]
    pub n_atoms: Vec<u64>,

    /// Use the atom-number ladder from the configuration
    #[arg(long)]
    pub ladder: bool,

    /// Output directory
    #[arg(long, short, value_name = "DIR")]
    pub out: PathBuf,

    /// Override the noise seed
    #[arg(long)]
    pub seed: Option<u64>,

    /// Write noiseless model curves
    #[arg(long)]
    pub noiseless: bool,
}

#[derive(Args)]
pub struct FitArgs {
    /// Spectrum CSV files
    #[arg(required = true, value_name = "SPECTRUM")]
    pub inputs: Vec<PathBuf>,

    /// Output directory
    #[arg(long, short, value_name = "DIR")]
    pub out: PathBuf,

    /// Hold the retroaction parameter R at this value
    #[arg(long, value_name = "R")]
    pub fix_r: Option<f64>,

    /// Hold R = 0 for traces whose initial coupling estimate is below threshold
    #[arg(long)]
    pub lock_r_below_threshold: bool,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Results document written by `fit`
    #[arg(value_name = "RESULTS")]
    pub results: PathBuf,

    /// Directory for report.txt and the plot table; stdout only when absent
    #[arg(long, short, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// A failure with its exit-code class.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Io(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Io(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Io(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<cavlattice::Error> for Failure {
    fn from(e: cavlattice::Error) -> Self {
        use cavlattice::Error as E;
        match e {
            E::Io { .. } => Failure::Io(e.to_string()),
            E::Parse { .. }
            | E::Schema { .. }
            | E::NonMonotoneDetunings { .. }
            | E::MixedSigmaPresence { .. }
            | E::InvalidParams(_)
            | E::MissingAtomNumber { .. } => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => {
            log::info!("configuration from {}", p.display());
            Ok(read_config(p)?)
        }
        None => Ok(RunConfig::default()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = load_config(cli.config.as_ref()).and_then(|cfg| match &cli.command {
        Command::Simulate(a) => commands::simulate(&cfg, a),
        Command::Fit(a) => commands::fit(&cfg, a),
        Command::Analyze(a) => commands::analyze(&cfg, a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
