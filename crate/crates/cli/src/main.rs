// Copyright 2026 The coscat Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use coscat::protocol::Engine;
use coscat_cli::config::OutputFormat;
use coscat_cli::{cmd_derive, cmd_simulate, cmd_sweep, CliError, SimulateOptions, SweepOptions, SweepValues};

#[derive(Parser)]
#[command(name = "coscat", version, about = "Conditional entanglement of levitated particles in a shared cavity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Analytic,
    Full,
    Both,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Analytic => Engine::Analytic,
            EngineArg::Full => Engine::Full,
            EngineArg::Both => Engine::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Print the derived rates of a configuration.
    Derive {
        config: PathBuf,
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run the protocol and write traces and a summary.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        engine: Option<EngineArg>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Run the protocol over values of one scalar parameter.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, conflicts_with = "range", required_unless_present = "range", allow_hyphen_values = true)]
        values: Option<String>,
        /// start:stop:count, both ends included.
        #[arg(long, allow_hyphen_values = true)]
        range: Option<String>,
        /// Output CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        engine: Option<EngineArg>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Derive { config, json } => cmd_derive(&config, json, &mut std::io::stdout().lock()),
        Command::Simulate { config, out, engine, format } => {
            let opts = SimulateOptions {
                out_dir: out,
                engine: engine.map(Engine::from),
                format: format.map(|f| match f {
                    FormatArg::Csv => OutputFormat::Csv,
                    FormatArg::Json => OutputFormat::Json,
                }),
            };
            for path in cmd_simulate(&config, &opts)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Sweep { config, param, values, range, out, engine } => {
            let values = match (values, range) {
                (Some(v), _) => SweepValues::parse_list(&v)?,
                (None, Some(r)) => SweepValues::parse_range(&r)?,
                (None, None) => unreachable!("clap enforces one of the two"),
            };
            let path = cmd_sweep(&config, &SweepOptions { param, values, out, engine: engine.map(Engine::from) })?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("coscat: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
