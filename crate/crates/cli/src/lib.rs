//! Experiment driver: configuration files, training, evaluation, traces
//! and system identification, with fingerprinted artifacts.

pub mod artifact;
pub mod commands;
pub mod config;

pub use commands::{
    cmd_evaluate, cmd_rollout, cmd_sysid, cmd_train, EvalOptions, EvaluationReport, PolicySource, RolloutOptions,
    TrainOptions,
};
pub use config::{ExperimentConfig, Precision};
