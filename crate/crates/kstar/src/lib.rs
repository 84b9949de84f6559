//! File formats, parallel episode batches and the `kstar` command-line tool
//! built on [`kstar_core`].

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod parallel;

pub use commands::{replay, run, Report, MANIFEST};
pub use config::{Command, Manifest, ModelSource, PolicyKind, RunConfig};
pub use error::CliError;
pub use parallel::{run_episodes_parallel, ParallelError};
