//! Command-line layer of the traveltime tomography toolkit: run
//! configuration, the subcommands as functions, and PNG rendering.

pub mod commands;
pub mod config;
pub mod render;

pub use commands::{DataSource, EvalReport, Split};
pub use config::RunConfig;
