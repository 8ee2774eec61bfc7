//! Batch experiment runner for transport-based hyperuniformity diagnostics.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod fit;
pub mod plot;

use hyperwass_core::Error;

/// JSON schema of `report.json`.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numeric(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 configuration, 3 numeric failure, 4 ceiling exceeded.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                Error::CeilingExceeded { .. } => 4,
                Error::InvalidInput(_)
                | Error::Parse { .. }
                | Error::DimensionMismatch { .. }
                | Error::OutOfDomain { .. }
                | Error::DegenerateGrid { .. }
                | Error::Io(_) => 2,
                _ => 3,
            },
            CliError::Numeric(_) | CliError::Io(_) => 3,
        }
    }
}
