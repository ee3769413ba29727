//! Command-line front end: model configs, chain export and studies.

pub mod commands;
pub mod config;
pub mod error;
pub mod export;
pub mod expr;

pub use error::CliError;
