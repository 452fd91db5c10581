//! Experiment driver for `shallowmark`: configuration, seeded pipelines,
//! reports and the command implementations behind the `shallowmark` binary.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod imageio;
pub mod report;
pub mod theory_run;

pub use config::ExperimentConfig;
