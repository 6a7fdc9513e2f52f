//! Command-line front end: configuration, experiment commands, and report
//! figures.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod svg;

pub use error::{CliError, CliResult};
