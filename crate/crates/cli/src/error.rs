//! Exit-code policy: 2 = the inputs or config are bad, 3 = a computation
//! refused them, 4 = the filesystem failed us.

use percept_core::ingest::IngestError;
use percept_core::metrics::MetricsError;
use percept_core::stats::StatsError;
use percept_core::synth::SynthError;
use percept_core::teaming::TeamingError;

#[derive(Debug)]
pub enum CliError {
    /// Config or input-file problem.
    Validation(String),
    /// A module rejected the request.
    Compute(String),
    /// Reading or writing output failed.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Compute(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Compute(m) | CliError::Io(m) => m,
        }
    }
}

/// Ingest failures while reading inputs are validation failures, whatever
/// their flavor; a missing file violates the config contract.
pub fn input_err(e: IngestError) -> CliError {
    CliError::Validation(e.to_string())
}

/// The same errors on the write side are I/O failures.
pub fn write_err(e: IngestError) -> CliError {
    CliError::Io(e.to_string())
}

pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> CliError {
        CliError::Compute(e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> CliError {
        CliError::Compute(e.to_string())
    }
}

impl From<TeamingError> for CliError {
    fn from(e: TeamingError) -> CliError {
        CliError::Compute(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> CliError {
        CliError::Validation(e.to_string())
    }
}
