//! File formats, configuration and the batch pipeline around
//! `holocyte-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod images;
pub mod manifest;
pub mod population;
pub mod qpif;
pub mod report;
pub mod stages;
pub mod svg;
pub mod tables;

pub use config::PipelineConfig;
pub use error::{Error, Result};
