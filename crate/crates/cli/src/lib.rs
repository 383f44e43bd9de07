//! Subcommands of the `dsilab` binary. Each reads artifacts from the work
//! directory and writes its own output directory with a manifest.

pub mod args;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod workspace;

pub use args::Cli;
pub use commands::run;
pub use config::ExperimentConfig;
