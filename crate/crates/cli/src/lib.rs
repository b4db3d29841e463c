//! Batch driver for the `avqmetts` binary: configuration handling and the
//! `run`, `ed`, `binder` and `fidelity` subcommands.

pub mod commands;
pub mod config;
mod error;

pub use commands::{cmd_binder, cmd_ed, cmd_fidelity, cmd_run, derive_seed};
pub use config::{Overrides, RunConfig, OUTPUT_ROOT_ENV};
pub use error::{CliError, CliResult};
