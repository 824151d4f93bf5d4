//! Command-line front end for the `secn` CTR toolkit: training, evaluation,
//! gradient checking, synthetic data generation and checkpoint inspection.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod model;

pub use cli::{run, run_main, Cli};
pub use error::{CliError, CliResult};
pub use model::AnyModel;
