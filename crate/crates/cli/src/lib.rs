//! Command-line driver for `prtest`: fitting z-score files, simulation
//! studies and gradient checks. The binary is a thin wrapper around [`run`].

use std::ffi::OsString;
use std::io::Write as _;

use clap::Parser;

pub mod args;
pub mod commands;
pub mod input;
pub mod output;

pub use args::{Cli, Command, FitArgs, GradcheckArgs, ModelArgs, SimulateArgs};
pub use commands::{cmd_fit, cmd_gradcheck, cmd_simulate, FitSummary};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "PRTEST_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 2,
            CliError::Numerical(_) | CliError::Check(_) => 1,
        }
    }
}

impl From<prtest_core::PrError> for CliError {
    fn from(e: prtest_core::PrError) -> Self {
        use prtest_core::PrError as E;
        match e {
            E::InvalidConfig(_) | E::InvalidParameter(_) | E::LengthMismatch { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

/// Configures the global worker pool from `PRTEST_THREADS`, if set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
    // Already initialized (e.g. a second call in the same process) is fine.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = configure_threads().and_then(|_| match &cli.command {
        Command::Fit(a) => cmd_fit(a).map(|_| ()),
        Command::Simulate(a) => cmd_simulate(a).map(|_| ()),
        Command::Gradcheck(a) => cmd_gradcheck(a).map(|_| ()),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            e.exit_code()
        }
    }
}
