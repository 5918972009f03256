//! Pipeline runner, report emitter and scoring server built on `icurisk`.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod serve;
pub mod svg;

pub use config::RunConfig;
pub use error::CliError;
pub use pipeline::{run_pipeline, RunReport};
pub use report::emit_report;
