//! Command-line harness: synthesize datasets, run the filters, compare.

mod commands;
mod config;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use commands::FilterKind;
use quatnav::simkit::DatasetFormat;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    /// `imu.csv` / `landmarks.csv` / `groundtruth.csv` with second timestamps.
    NativeCsv,
    /// IMU and ground truth with integer nanosecond timestamps and `#` comments.
    AslCsv,
}

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::NativeCsv => DatasetFormat::NativeCsv,
            FormatArg::AslCsv => DatasetFormat::AslCsv,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "quatnav",
    version,
    about = "Visual-inertial navigation filters: synthetic data, estimation runs and comparisons"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (imu.csv, landmarks.csv, groundtruth.csv).
    Simulate {
        /// Trajectory/sensor specification (TOML).
        #[arg(long)]
        spec: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// RNG seed; the whole dataset is a deterministic function of it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run one filter over a dataset and emit estimates, errors and a report.
    Run {
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Which estimator to run; falls back to the config's `filter` key.
        #[arg(long, value_enum)]
        filter: Option<FilterKind>,
        /// Filter configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Dataset layout.
        #[arg(long, value_enum, default_value_t = FormatArg::NativeCsv)]
        format: FormatArg,
    },
    /// Run several configs on the same streams and emit side-by-side errors.
    Compare {
        /// Dataset directory (must contain ground truth).
        #[arg(long)]
        data: PathBuf,
        /// Two or more filter configuration files.
        #[arg(long, num_args = 1.., required = true)]
        configs: Vec<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Dataset layout.
        #[arg(long, value_enum, default_value_t = FormatArg::NativeCsv)]
        format: FormatArg,
    },
}

fn main() -> Result<()> {
    if let Ok(threads) = std::env::var("QUATNAV_THREADS") {
        let n: usize = threads
            .parse()
            .with_context(|| format!("QUATNAV_THREADS must be an integer, got `{threads}`"))?;
        quatnav::configure_threads(n)
            .map_err(|e| anyhow::anyhow!("configuring {n} worker threads: {e}"))?;
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { spec, out, seed } => commands::cmd_simulate(&spec, &out, seed),
        Command::Run {
            data,
            filter,
            config,
            out,
            format,
        } => commands::cmd_run(&data, filter, &config, &out, format.into()),
        Command::Compare {
            data,
            configs,
            out,
            format,
        } => commands::cmd_compare(&data, &configs, &out, format.into()),
    }
}
