//! Data ingestion, configuration, synthetic OD generation and the pipeline
//! commands behind the `odmix` binary.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod synth;

pub use commands::{run_command, Outcome, Verb};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
