//! Command-line front end: configuration loading, subcommands, plots and
//! parameter sweeps on top of `transient-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;
pub mod sweep;
