//! Shared plumbing for the command-line tools: one error type whose exit
//! status distinguishes file-format failures from everything else.

use std::fmt;
use std::process::ExitCode;

use pcasr::harness::HarnessError;
use pcasr::mvq::{FormatError, MvqError};

/// Exit status for failures that are not file-format errors.
pub const GENERAL_FAILURE: u8 = 1;

#[derive(Debug)]
pub enum CliError {
    /// Carries its own exit status (see [`FormatError::code`]).
    Format(FormatError),
    Other(String),
}

impl CliError {
    pub fn msg(s: impl Into<String>) -> Self {
        CliError::Other(s.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Format(e) => e.code() as u8,
            CliError::Other(_) => GENERAL_FAILURE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Format(e) => e.fmt(f),
            CliError::Other(s) => f.write_str(s),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Format(e)
    }
}

impl From<MvqError> for CliError {
    fn from(e: MvqError) -> Self {
        match e {
            MvqError::Format(f) => CliError::Format(f),
            e => CliError::Other(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Format(f) => CliError::Format(f),
            HarnessError::Mvq(m) => m.into(),
            e => CliError::Other(e.to_string()),
        }
    }
}

macro_rules! other_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Other(e.to_string())
            }
        }
    )*};
}

other_from!(
    pcasr::metrics::MetricsError,
    pcasr::textnorm::TextError,
    pcasr::transducer::TransducerError,
    pcasr::kd::KdError,
    serde_json::Error,
    std::io::Error
);

/// Runs a command body, printing any error to stderr.
pub fn run(body: impl FnOnce() -> Result<(), CliError>) -> ExitCode {
    match body() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Writes to the file, or to stdout when no path is given.
pub fn emit(path: Option<&std::path::Path>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, content).map_err(|e| CliError::msg(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}
