//! File formats, sweeps, reports and the command-line front end for `dia-core`.

pub mod app;
pub mod error;
pub mod model;
pub mod output;
pub mod report;
pub mod sweep;

pub use error::{CliError, CliResult};
