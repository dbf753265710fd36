//! Command-line front end: configuration, training, sweeps, swarm
//! baselines, dynamics validation and classifier reports.
//!
//! Every output file starts with a provenance header naming the tool
//! version, a config digest, the seed and a run id.

pub mod args;
pub mod commands;
pub mod config;
pub mod report;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}
