//! Experiment runner library behind the `lsbl` binary: JSON configuration,
//! solver dispatch, and the five subcommand implementations.

pub mod config;
pub mod error;
pub mod run;
pub mod solvers;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use run::Context;
