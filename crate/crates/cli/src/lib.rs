//! Experiment harness: configuration, subcommands and output files.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use error::CliError;
