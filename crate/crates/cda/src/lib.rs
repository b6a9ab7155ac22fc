//! File formats, configuration, benchmark harness and command-line front end
//! for `cda-core`.

pub mod bench;
pub mod cli;
pub mod config;
mod error;
pub mod format;
pub mod io;

pub use error::{CliError, Result};
