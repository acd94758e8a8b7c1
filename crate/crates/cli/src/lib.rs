//! Command-line front end: row files, synthetic data, pipelines and reports.

pub mod commands;
pub mod error;
pub mod io;
pub mod report;

pub use commands::{run, Cli};
pub use error::CliError;
