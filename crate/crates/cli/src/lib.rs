//! Command-line front end for the kernel Bayes' rule experiments.
//!
//! Settings come from defaults, then an optional `key = value` file
//! (`--config`), then flags; every key is also a flag of the same name.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Arg, ArgAction, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
/// At least one sweep row failed on every replicate.
pub const EXIT_HARD_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid value for {key}: {reason}")]
    Usage { key: String, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Core(#[from] kbr_core::KbrError),

    #[error(transparent)]
    Clap(#[from] clap::Error),
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Csv(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } | CliError::Clap(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Check {
    PriorIndependence,
    GramNonsingular,
    WeightsNonzero,
    DivergenceProbe,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::PriorIndependence => "prior-independence",
            Check::GramNonsingular => "gram-nonsingular",
            Check::WeightsNonzero => "weights-nonzero",
            Check::DivergenceProbe => "divergence-probe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// All classifiers over the prior list at one (sigma, epsilon, delta)
    SweepPrior,
    /// Every (sigma, epsilon, delta) combination of the grids
    SweepGrid,
    /// Run one numerical diagnostic
    Diagnose {
        #[arg(value_enum)]
        check: Check,
    },
    /// Print the version
    Version,
}

#[derive(Debug, Parser)]
#[command(name = "kbr", version, about = "Kernel Bayes' rule sweeps and diagnostics")]
struct Cli {
    /// Flat key = value file; flags override it
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

/// Parsed command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub command: Command,
    pub config: RunConfig,
}

fn command_with_keys() -> clap::Command {
    let mut cmd = Cli::command();
    for (key, help, _) in config::KEYS {
        let mut arg = Arg::new(*key)
            .long(*key)
            .help(*help)
            .global(true)
            .value_name("VALUE")
            .action(ArgAction::Set);
        if matches!(*key, "svg" | "plot-data") {
            arg = arg.num_args(0..=1).default_missing_value("true");
        } else {
            // negative numbers and class means like -1:0
            arg = arg.allow_hyphen_values(true);
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

/// Parses arguments (including the program name) into a command and a
/// configuration. Without a subcommand, `sweep-prior` runs.
pub fn parse_config<I, T>(args: I) -> Result<Invocation, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = command_with_keys().try_get_matches_from(args)?;
    let cli = Cli::from_arg_matches(&matches)?;
    let flags: Vec<(String, String)> = config::KEYS
        .iter()
        .filter_map(|(key, _, _)| {
            matches
                .get_one::<String>(key)
                .map(|v| (key.to_string(), v.clone()))
        })
        .collect();
    let file = match &cli.config {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?),
        None => None,
    };
    Ok(Invocation {
        command: cli.command.unwrap_or(Command::SweepPrior),
        config: RunConfig::from_layers(file.as_deref(), &flags)?,
    })
}

/// Parses, runs and reports; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let invocation = match parse_config(args) {
        Ok(inv) => inv,
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match commands::execute(&invocation) {
        Ok(outcome) => {
            for path in &outcome.files {
                eprintln!("wrote {}", path.display());
            }
            if outcome.hard_failures > 0 {
                eprintln!(
                    "error: {} row(s) failed on every replicate",
                    outcome.hard_failures
                );
                EXIT_HARD_FAILURE
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_args_is_default_sweep() {
        let inv = parse_config(["kbr"]).unwrap();
        assert_eq!(inv.command, Command::SweepPrior);
        assert_eq!(inv.config, RunConfig::from_layers(None, &[]).unwrap());
    }

    #[test]
    fn every_key_is_a_flag() {
        let cmd = command_with_keys();
        for (key, _, _) in config::KEYS {
            assert!(cmd.get_arguments().any(|a| a.get_long() == Some(*key)), "{key}");
        }
    }

    #[test]
    fn flags_after_subcommand() {
        let inv = parse_config(["kbr", "diagnose", "gram-nonsingular", "--trials", "7", "--svg"]).unwrap();
        assert_eq!(
            inv.command,
            Command::Diagnose {
                check: Check::GramNonsingular
            }
        );
        assert_eq!(inv.config.trials, Some(7));
        assert!(inv.config.svg);
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let err = parse_config(["kbr", "--sigma", "-1"]).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_USAGE);
        assert!(err.to_string().contains("sigma"));
        let err = parse_config(["kbr", "--no-such-flag", "1"]).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_USAGE);
    }

    #[test]
    fn missing_config_file_is_io_error() {
        let err = parse_config(["kbr", "--config", "/nonexistent/kbr.conf"]).unwrap_err();
        assert!(matches!(err, CliError::Io { .. }));
    }
}
