//! The `seqdep` command line and local HTTP service.

pub mod cli;
pub mod config;
pub mod ops;
pub mod remote;
pub mod server;
pub mod workspace;

pub use cli::{run, Cli, EXIT_DOMAIN, EXIT_OK, EXIT_USAGE};
