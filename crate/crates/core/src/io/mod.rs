//! Data layer: panel ingestion, run configuration, model files and reports.

pub mod config;
pub mod model_file;
pub mod panel;
pub mod report;
