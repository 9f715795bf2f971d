//! Library surface of the command-line tool, exposed for integration
//! tests and the acceptance suite.

pub mod commands;
pub mod config;
pub mod error;
pub mod store;

pub use commands::{run_command, Command, RunOptions};
pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use store::{resolve_root, ArtifactStore};
