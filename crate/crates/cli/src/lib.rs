//! The `llc` pipeline driver: configuration, stage orchestration and report
//! emission on top of `lifeline-core`.

pub mod app;
pub mod config;
pub mod error;
pub mod output;

pub use app::{execute, run, Cli, Command, Outcome};
pub use config::RunConfig;
pub use error::CliError;
