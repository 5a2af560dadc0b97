//! The `pod` command line.
//!
//! Every subcommand returns an exit code: 0 when all checks pass, 1 when a
//! property is violated (or a file fails validation), 2 for configuration and
//! input errors. Reports go to stdout as JSON; short PASS/FAIL lines go to
//! stderr. When `POD_LOG_DIR` is set, traces, views and evidence files are
//! written there.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pod_core::FaultProfile;

pub mod auction;
pub mod bench;
pub mod files;
pub mod report;
pub mod simulate;

pub use report::{PropertyLine, RunReport};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VIOLATION: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

pub const LOG_DIR_ENV: &str = "POD_LOG_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
}

impl CliError {
    pub fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pod", version, about = "Simulate, benchmark and audit the pod protocol")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the round simulator and check protocol properties.
    Simulate(simulate::SimulateArgs),
    /// Measure write-to-confirmation latency over loopback sockets.
    Bench(bench::BenchArgs),
    /// Run a bid-set auction in the simulator.
    Auction(auction::AuctionArgs),
    /// Check a serialized view.
    Verify(files::VerifyArgs),
    /// Print replicas proven faulty by a vote transcript.
    Identify(files::IdentifyArgs),
    /// Judge a sequencer from an evidence file.
    IdentifySequencer(files::IdentifySequencerArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ProfileArgs {
    #[arg(long, default_value_t = 9)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub beta: usize,
    #[arg(long, default_value_t = 1)]
    pub gamma: usize,
}

impl ProfileArgs {
    pub fn profile(&self) -> Result<FaultProfile, CliError> {
        FaultProfile::check(self.n, self.beta, self.gamma).map_err(CliError::config)
    }
}

/// Directory named by `POD_LOG_DIR`, created if needed.
pub fn log_dir() -> Result<Option<PathBuf>, CliError> {
    match std::env::var_os(LOG_DIR_ENV) {
        Some(d) if !d.is_empty() => {
            let d = PathBuf::from(d);
            std::fs::create_dir_all(&d).map_err(|e| CliError::io(&d, e))?;
            Ok(Some(d))
        }
        _ => Ok(None),
    }
}

pub fn write_file(path: PathBuf, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Runs one command, writing its output to `out` and `err`.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(&a).map(|r| r.emit(out, err)),
        Command::Bench(a) => bench::run(&a).map(|r| r.emit(out, err)),
        Command::Auction(a) => auction::run(&a).map(|r| r.emit(out, err)),
        Command::Verify(a) => files::verify(&a, out, err),
        Command::Identify(a) => files::identify(&a, out),
        Command::IdentifySequencer(a) => files::identify_sequencer(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_CONFIG
        }
    }
}
