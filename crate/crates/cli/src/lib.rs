//! Library side of the `loopcal` command: configuration, frame
//! directories and the subcommands.

pub mod commands;
pub mod config;
pub mod frames;
