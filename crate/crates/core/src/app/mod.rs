//! Command-line application: run configuration and command implementations.

pub mod commands;
pub mod config;

pub use config::RunConfig;
