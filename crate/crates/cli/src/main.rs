//! `echo-lab` command-line tool.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error, 3 configuration
//! error, 4 I/O error, 5 failed reproduction checks.

mod commands;
mod config;
mod error;
mod output;
mod units;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Context, TmOptions, WitnessInput};
use error::{exit, CliError};
use output::Format;
use units::Time;

const DEFAULT_SEED: u64 = 1;
const DEFAULT_DURATION: f64 = 5.0;

#[derive(Debug, Parser)]
#[command(
    name = "echo-lab",
    version,
    about = "Simulate and analyse AFC memory experiments with time-bin entangled photons"
)]
struct Cli {
    /// Experiment description (TOML).
    #[arg(long, global = true, env = "ECHOLAB_CONFIG")]
    config: Option<PathBuf>,
    /// Random seed; overrides the config file.
    #[arg(long, global = true, env = "ECHOLAB_SEED")]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(
        long,
        global = true,
        env = "ECHOLAB_OUT_DIR",
        default_value = "echo-lab-out"
    )]
    out_dir: PathBuf,
    #[arg(
        long,
        global = true,
        env = "ECHOLAB_FORMAT",
        value_enum,
        default_value = "json"
    )]
    format: Format,
    /// Simulated time, e.g. "10 s"; overrides the config file.
    #[arg(long, global = true, env = "ECHOLAB_DURATION")]
    duration: Option<Time>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate time-tag streams.
    Simulate,
    /// Histogram a tag stream and compute figures of merit.
    Analyze {
        /// Tag file (.etag or .csv); defaults to tags.etag in the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Closed-form storage efficiencies over optical depth and finesse.
    MemoryTheory {
        /// Peak optical depths (comma separated).
        #[arg(long = "depth", value_delimiter = ',')]
        depths: Vec<f64>,
        /// Comb finesses (comma separated).
        #[arg(long, value_delimiter = ',')]
        finesse: Vec<f64>,
        /// Background optical depth.
        #[arg(long, default_value_t = 0.0)]
        background: f64,
        #[arg(long)]
        storage_time: Option<Time>,
    },
    /// Rank storage times compatible with the pump train and the side holes.
    OptimizeTm {
        #[arg(long, default_value = "300 ns")]
        min: Time,
        #[arg(long, default_value = "2000 ns")]
        max: Time,
        #[arg(long)]
        rep_period: Option<Time>,
        #[arg(long)]
        side_period: Option<Time>,
        #[arg(long)]
        photon_width: Option<Time>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Entanglement witness from a visibility and a cross-correlation.
    Witness {
        #[arg(long)]
        visibility: f64,
        #[arg(long, default_value_t = 0.0)]
        visibility_sigma: f64,
        #[arg(long)]
        g2: f64,
        #[arg(long, default_value_t = 0.0)]
        g2_sigma: f64,
        #[arg(long, default_value_t = 1)]
        port: u8,
        #[arg(long, default_value_t = 3.0)]
        k_sigma: f64,
    },
    /// Run the reproduction checks and report pass/fail for each.
    PaperCheck {
        /// Check identifiers to run (comma separated); all when omitted.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let loaded = match &cli.config {
        Some(path) => config::load(path)?,
        None => config::defaults()?,
    };
    if let Some(check) = &loaded.delay_check {
        for reason in &check.reasons {
            eprintln!("warning: interferometer delays: {reason}");
        }
    }
    let seed = cli.seed.or(loaded.file.seed).unwrap_or(DEFAULT_SEED);
    let duration = cli
        .duration
        .or(loaded.file.duration)
        .map(Time::si)
        .unwrap_or(DEFAULT_DURATION);
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| CliError::io(&cli.out_dir, e))?;
    let ctx = Context {
        loaded,
        seed,
        duration,
        out_dir: cli.out_dir,
        format: cli.format,
    };
    match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Analyze { input } => commands::analyze(&ctx, input.as_deref()),
        Command::MemoryTheory {
            depths,
            finesse,
            background,
            storage_time,
        } => commands::memory_theory(&ctx, &depths, &finesse, background, storage_time),
        Command::OptimizeTm {
            min,
            max,
            rep_period,
            side_period,
            photon_width,
            limit,
        } => commands::optimize_tm(
            &ctx,
            &TmOptions {
                min,
                max,
                rep_period,
                side_period,
                photon_width,
                limit,
            },
        ),
        Command::Witness {
            visibility,
            visibility_sigma,
            g2,
            g2_sigma,
            port,
            k_sigma,
        } => commands::witness_cmd(
            &ctx,
            &WitnessInput {
                visibility,
                visibility_sigma,
                g2,
                g2_sigma,
                port,
                k_sigma,
            },
        ),
        Command::PaperCheck { only } => commands::paper_check(&ctx, &only),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
