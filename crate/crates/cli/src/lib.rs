//! Command-line front end of `ctxboot`: ingestion, configuration, and
//! artifact emission for the fit, figures, simulate, bands and verification
//! subcommands.

pub mod args;
pub mod artifacts;
pub mod commands;
pub mod error;

pub use args::{Cli, Command};
pub use commands::run;
pub use error::{CliError, CliResult};
