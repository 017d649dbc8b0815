//! Command line front end: configuration, file formats, and the end-to-end
//! pipeline over the `lsing` library.

pub mod commands;
pub mod config;
pub mod error;
pub mod heatmap;
pub mod io;
pub mod model;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use pipeline::{run_pipeline, PipelineOutcome};
