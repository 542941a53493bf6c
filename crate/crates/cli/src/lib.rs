//! File formats, configuration handling and subcommands behind the
//! `mapinfer` binary.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod geojson;
pub mod manifest;
pub mod mapfile;
pub mod trajcsv;

pub use error::CliError;

/// Parses `argv` (after config-file expansion) and runs the chosen subcommand.
pub fn run(argv: Vec<String>) -> Result<(), CliError> {
    let argv = config::expand_config(argv)?;
    let cli = <args::Cli as clap::Parser>::try_parse_from(argv)?;
    commands::dispatch(cli)
}
