//! File formats, run configuration and subcommands around `ssnnpu-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod run;

pub use error::{Error, Result};
