//! Experiment files, run outputs and the subcommands of the `sim` binary.

pub mod commands;
pub mod config;
pub mod output;
