//! Command-line front end for the `homsim` simulator.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod record;
pub mod sweep;

pub use error::{CliError, ErrorKind};
