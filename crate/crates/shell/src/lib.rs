//! Files, schemas, configuration, the end-to-end pipeline and the command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod plot;
pub mod schema;

#[cfg(test)]
mod e2e;

pub use error::{ShellError, ShellResult};
