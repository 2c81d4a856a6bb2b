//! Experiment plumbing: parameter sampling, replicated runs and CSV output.

mod experiment;
mod sampler;

pub use experiment::{
    compute_experiment, run_experiment, CsvTable, ExperimentResult, ExperimentSpec, GammaRule, Manifest,
    ReplicateInfo, Scenario, OUT_DIR_ENV,
};
pub use sampler::{sample_config, ParameterSampler, SampledConfig, UniformRange};

use thiserror::Error;

use crate::ce::CeError;
use crate::config::ConfigError;
use crate::dynamics::DynamicsError;
use crate::game::GameError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no acceptable configuration within {budget} draws")]
    RejectionBudgetExceeded { budget: usize },
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("no positive gamma for extortion factor {chi}")]
    Infeasible { chi: f64 },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Ce(#[from] CeError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("encoding manifest: {0}")]
    Json(#[from] serde_json::Error),
}
