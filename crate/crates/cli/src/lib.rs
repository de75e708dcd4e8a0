//! Command-line experiment runner for the gmesim simulator.

pub mod commands;
pub mod config;
pub mod error;

pub use error::CliError;
