//! Command-line front end: simulate data sets, reconstruct with a stopping
//! rule, run multi-realization sweeps and run the numerical self-checks.
//!
//! Exit status: `0` on success, `1` for invalid input, configuration or I/O
//! problems and failed validation checks, `2` for numerical failures.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

mod reconstruct;
mod simulate;
mod sweep;
mod validate;

pub use reconstruct::{reconstruct, ReconstructArgs, ReconstructSummary, StopRule};
pub use simulate::{simulate, SimulateArgs};
pub use sweep::{spr_csv, summary_csv, sweep, trials_csv, SweepArgs};
pub use validate::{validate, Check, CheckReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] emstop::Error),
    #[error("{0}")]
    Usage(String),
    #[error("validation failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "emstop", version, about = "Early stopping for EM / Richardson-Lucy deconvolution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one data set from an experiment config.
    Simulate(SimulateArgs),
    /// Reconstruct data with EM and select an iteration.
    Reconstruct(ReconstructArgs),
    /// Run every noise realization of an experiment config.
    Sweep(SweepArgs),
    /// Run a numerical self-check.
    Validate(ValidateArgs),
}

#[derive(Debug, clap::Args)]
pub struct ValidateArgs {
    #[arg(long, value_enum)]
    pub check: Check,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Output directory argument shared by the file-producing commands.
#[derive(Debug, Clone, clap::Args)]
pub struct OutDir {
    /// Directory for the output files; created if missing.
    #[arg(long = "out", short = 'o')]
    pub path: PathBuf,
}

impl OutDir {
    pub fn create(&self) -> Result<&std::path::Path> {
        std::fs::create_dir_all(&self.path)?;
        Ok(&self.path)
    }
}

/// Loads a config file, returning its raw bytes (for the manifest hash) and
/// the parsed config.
pub(crate) fn load_config(path: &std::path::Path) -> Result<(Vec<u8>, emstop::ExperimentConfig)> {
    let raw = std::fs::read(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let config = emstop::ExperimentConfig::from_file(path)?;
    Ok((raw, config))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReklProbeArg {
    Independent,
    Shared,
}

impl From<ReklProbeArg> for emstop::em::ReklProbe {
    fn from(p: ReklProbeArg) -> Self {
        match p {
            ReklProbeArg::Independent => emstop::em::ReklProbe::Independent,
            ReklProbeArg::Shared => emstop::em::ReklProbe::Shared,
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            simulate(&args)?;
            println!("wrote simulation to {}", args.out.path.display());
            Ok(())
        }
        Command::Reconstruct(args) => {
            let summary = reconstruct(&args)?;
            println!(
                "selected k = {}{} of {} iterations, wrote {}",
                summary.selected.k,
                if summary.selected.reached { "" } else { " (not reached)" },
                summary.iterations,
                args.out.path.display()
            );
            Ok(())
        }
        Command::Sweep(args) => {
            let result = sweep(&args)?;
            for f in result.failures() {
                eprintln!("realization {} failed: {}", f.realization, f.message);
            }
            print!("{}", summary_csv(&result));
            Ok(())
        }
        Command::Validate(args) => {
            let report = validate(args.check, args.seed)?;
            print!("{report}");
            if report.passed {
                Ok(())
            } else {
                Err(CliError::CheckFailed(report.name.to_owned()))
            }
        }
    }
}
