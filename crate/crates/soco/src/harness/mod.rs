//! Experiment orchestration: config ingestion, seeded Monte Carlo runs,
//! tail estimation, window sweeps, and CSV/JSON persistence.

pub mod config;
pub mod experiment;
pub mod output;

pub use config::{ConfiguredPolicy, ExperimentConfig, ResolvedExperiment};
pub use experiment::{
    run_experiment, sweep_window, tail_experiment, ExperimentOutput, SummaryStats, THREADS_ENV,
};
pub use output::{write_outputs, write_sweep, write_tail};
