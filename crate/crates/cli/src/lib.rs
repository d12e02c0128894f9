//! Configuration, sweep runner, persistence and reporting for the `arlequin` tool.

pub mod commands;
pub mod config;
pub mod output;
pub mod report;
pub mod sweep;

pub use config::StudyConfig;
pub use sweep::{run_sweep, ResultRow};
