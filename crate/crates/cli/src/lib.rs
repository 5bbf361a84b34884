// Copyright 2026 The coscat Authors
// SPDX-License-Identifier: Apache-2.0

//! Library side of the `coscat` binary: config parsing, the `derive`,
//! `simulate` and `sweep` commands and their file formats.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{cmd_derive, cmd_simulate, cmd_sweep, SimulateOptions, SweepOptions, SweepValues};
pub use config::{RawConfig, RunConfig};

/// Environment variable holding the sweep worker count.
pub const WORKERS_ENV: &str = "COSCAT_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] coscat::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}
