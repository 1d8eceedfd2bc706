//! Command implementations behind the `ganids` binary. Split from `main` so
//! integration tests can drive commands in-process.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use artifacts::Workspace;
pub use config::RunConfig;
pub use error::CliError;
