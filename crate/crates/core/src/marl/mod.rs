//! Heterogeneous multi-agent PPO with centralized critics, and the
//! single-agent baseline.

mod agent;
mod buffer;
mod config;
mod eval;
mod rollout;
mod trainer;

pub use agent::{clipped_surrogate, kl_adaptive_lr, ppo_update, Agent, AgentRole, AgentSpec, Surrogate, UpdateStats};
pub use buffer::{compute_gae, normalize_advantages, RolloutBuffer};
pub use config::{KlMode, TrainerConfig};
pub use eval::{evaluate, ControlPolicy, DeterministicTeam, Evaluation, RandomPolicy};
pub use rollout::{check_team, collect_rollouts, mask_privileged, roles_for, Rollout};
pub use trainer::{
    metrics_record, run_training, train_mappo, train_single_agent, write_metrics, EvalSnapshot, IterationOutput,
    MetricsRow, Trainer, METRICS_HEADER, METRICS_WINDOW,
};
