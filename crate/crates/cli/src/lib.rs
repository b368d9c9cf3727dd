//! The `contig` command-line pipeline: synth → pretrain → explain / assoc /
//! eval → report.

pub mod artifacts;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;

pub use cli::Cli;
pub use config::{Override, RunConfig};
pub use error::{CliError, Result};
