//! Experiment harness for the `stss` solver: configuration, deterministic
//! seeding, the undersampling and coherence sweeps, aggregation, CSV output,
//! and oracle self-checks.

pub mod aggregate;
pub mod config;
pub mod experiment;
pub mod output;
pub mod seed;
pub mod selftest;

pub use config::{Experiment, ExperimentConfig, Method};
pub use experiment::{run_experiment, run_experiment_filtered, ResultRow};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] stss_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;
