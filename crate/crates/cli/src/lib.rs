//! Command-line front end: configuration loading, the driver and curve
//! commands, and deterministic CSV emission.

pub mod commands;
pub mod config;
pub mod csvfmt;
pub mod program;

pub use commands::{CmdError, RunError};
pub use config::{ConfigError, RunConfig};
