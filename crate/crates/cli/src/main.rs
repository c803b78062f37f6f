mod commands;
mod manifest;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ris_backcom::Error;

/// Experiments for waveform-index backscatter over an RIS-aided MIMO radar.
#[derive(Debug, Clone, Parser)]
#[command(name = "risbc", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML configuration; omitted keys take reference values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured Monte Carlo trial count.
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    /// Output CSV; the run manifest is written next to it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Transmission rate against codeword length.
    Rate {
        /// Active subarrays; defaults to the configured value.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 10)]
        l_min: usize,
        #[arg(long, default_value_t = 60)]
        l_max: usize,
    },
    /// Error probability against codeword length.
    PeVsL {
        #[arg(long, value_delimiter = ',', default_values_t = [15, 21, 31, 41])]
        lengths: Vec<usize>,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Error probability against tag-reader delay spread (in samples).
    PeVsSpread {
        #[arg(long, value_delimiter = ',', default_values_t = [5, 10, 15, 20])]
        spreads: Vec<usize>,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Radiated frame energy over a direction grid.
    Beampattern {
        #[arg(long, default_value_t = -90.0, allow_hyphen_values = true)]
        az_min: f64,
        #[arg(long, default_value_t = 90.0, allow_hyphen_values = true)]
        az_max: f64,
        #[arg(long, default_value_t = 181)]
        n_az: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        el_min: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        el_max: f64,
        #[arg(long, default_value_t = 1)]
        n_el: usize,
        /// Evaluate through the code matrix of this hex payload instead of the closed form.
        #[arg(long)]
        message: Option<String>,
    },
    /// Encode one hex payload, send it through a channel draw and detect it.
    SingleFrame {
        #[arg(long)]
        message: String,
        #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
        snr_db: f64,
        /// Trial index selecting the channel and noise substreams.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Run the built-in oracle checks; exits 4 on any failure.
    Validate,
    /// Write one tag-reader channel realization as CSV.
    ChannelDump {
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Re-run the command recorded in a run manifest.
    Replay { manifest: PathBuf },
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// SNR points in dB; defaults to the configured grid.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr_db: Vec<f64>,
    /// Add a semi-analytic row per point.
    #[arg(long)]
    pub semi_analytic: bool,
    /// Channel draws for the semi-analytic rows; defaults to the configured value.
    #[arg(long)]
    pub draws: Option<u64>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Numerical(String),
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Validation(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Config(m) => write!(f, "{m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) => CliError::Usage(e.to_string()),
            Error::Config(_) => CliError::Config(e.to_string()),
            Error::DimensionMismatch { .. } | Error::Convergence { .. } | Error::TooManyFailures { .. } => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli, &argv[1..], None) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("risbc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
