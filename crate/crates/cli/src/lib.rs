//! Dataset, configuration, reporting and export layer of the `wisp` tool.

pub mod app;
pub mod baseline;
pub mod config;
pub mod dataset;
pub mod error;
pub mod export;
pub mod report;
pub mod runlog;
