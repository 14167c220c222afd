//! Experiment runner and file plumbing behind the `shieldscatter` CLI.

pub mod config;
pub mod experiment;
pub mod pairs;
pub mod report;
pub mod seeds;

pub use config::{ExperimentConfig, Sweep, SweepAxis};
pub use experiment::{run_experiment, write_outputs, ExperimentOutput, MetricsRecord};
