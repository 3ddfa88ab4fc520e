//! Command-line front end: configuration, file formats and the subcommands.

pub use hierground_core as core;

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
