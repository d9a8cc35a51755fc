//! Command-line front end for `gmdl-core`: JSON configs, CSV tables, run
//! manifests and plot-data export.

pub mod cli;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;
pub mod table;

pub use cli::run;
pub use error::{CliError, CliResult};
