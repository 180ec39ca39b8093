//! File formats, configuration and the command line for `scdiff-core`.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod csv_io;
pub mod error;

pub use error::{CliError, Result};
