//! File formats, configuration and subcommands of the `kvmem` tool.
//!
//! Every subcommand is reachable in-process through [`run`], which writes
//! to the given streams instead of the process's own.

pub mod checkpoint;
mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use cli::{command, run};
pub use error::{CliError, CliResult};
