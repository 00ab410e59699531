//! Command-line front end: configuration, data preparation and the
//! `synth`, `train`, `localize` and `evaluate` commands.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod plot;

pub use args::Cli;
pub use config::{ExperimentConfig, LabelMode};
pub use error::CliError;
