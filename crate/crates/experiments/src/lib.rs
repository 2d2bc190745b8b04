//! Experiment runner for gradient tracking over finite-time consensus
//! sequences: JSON configs and presets, Monte-Carlo aggregation, sweeps,
//! CSV/SVG output.

pub mod config;
pub mod plot;
pub mod runner;

use thiserror::Error;

pub use config::{load_config, preset, ExperimentConfig};
pub use runner::{run_experiment, sweep, RunResult, SeriesResult, SweepAxis};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config parse error at line {line}, column {column}: {msg}")]
    Config { line: usize, column: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("graph: {0}")]
    Graph(#[from] ftc_core::GraphError),
    #[error("sequence: {0}")]
    Ftc(#[from] ftc_core::FtcError),
    #[error("problem: {0}")]
    Problem(#[from] ftc_core::ProblemError),
    #[error("optimizer: {0}")]
    Optimizer(#[from] ftc_core::OptimizerError),
    #[error("bounds: {0}")]
    Bounds(#[from] ftc_core::BoundError),
    #[error("io: {0}")]
    Io(String),
}

impl ExperimentError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentError::Config { .. } => "config",
            ExperimentError::Validation(_) => "validation",
            ExperimentError::Graph(_) => "graph",
            ExperimentError::Ftc(_) => "ftc",
            ExperimentError::Problem(_) => "problem",
            ExperimentError::Optimizer(_) => "optimizer",
            ExperimentError::Bounds(_) => "bounds",
            ExperimentError::Io(_) => "io",
        }
    }
}
