//! Command-line driver for `stabsphere-core`: TOML run configurations,
//! parallel execution, and JSON/CSV reports.

pub mod checks;
pub mod cli;
pub mod config;
pub mod exec;
pub mod expr;
pub mod report;
pub mod setup;

pub use stabsphere_core as core;
