use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, DEFAULT_HIDDEN};
use crate::scalar::Real;

/// What the KL threshold controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlMode {
    /// After every epoch the learning rate shrinks or grows to keep the
    /// epoch's mean KL near the threshold.
    #[default]
    AdaptiveLr,
    /// Remaining epochs are skipped once an epoch's KL exceeds 1.5× the
    /// threshold; the learning rate stays fixed.
    EarlyStop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", default)]
pub struct TrainerConfig<T: Real> {
    pub gamma: T,
    pub clip_epsilon: T,
    pub kl_threshold: T,
    pub kl_mode: KlMode,
    pub gae_lambda: T,
    /// Control steps collected per environment per iteration.
    pub horizon: usize,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: T,
    pub value_coef: T,
    pub learning_rate: T,
    pub lr_min: T,
    pub lr_max: T,
    /// Global gradient-norm cap per agent; zero disables it.
    pub max_grad_norm: T,
    pub num_envs: usize,
    pub total_steps: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub init_log_std: T,
    /// Scale of the policy output layer at initialization.
    pub policy_output_gain: f64,
    /// Standardize policy and critic inputs with running statistics.
    pub normalize_observations: bool,
    /// Critics predict standardized returns.
    pub normalize_values: bool,
    /// Critics see the ground-truth object position; off masks it to zero.
    pub privileged_critic: bool,
    /// Iterations between deterministic evaluation snapshots; zero disables them.
    pub eval_interval: usize,
    pub eval_episodes: usize,
}

impl<T: Real> Default for TrainerConfig<T> {
    fn default() -> Self {
        Self {
            gamma: T::of(0.99),
            clip_epsilon: T::of(0.2),
            kl_threshold: T::of(0.016),
            kl_mode: KlMode::AdaptiveLr,
            gae_lambda: T::of(0.95),
            horizon: 24,
            epochs: 5,
            minibatches: 4,
            entropy_coef: T::of(0.001),
            value_coef: T::one(),
            learning_rate: T::of(3e-4),
            lr_min: T::of(1e-6),
            lr_max: T::of(1e-2),
            max_grad_norm: T::one(),
            num_envs: 32,
            total_steps: 2_000_000,
            seed: 0,
            hidden: DEFAULT_HIDDEN.to_vec(),
            activation: Activation::Elu,
            init_log_std: T::zero(),
            policy_output_gain: 0.01,
            normalize_observations: true,
            normalize_values: true,
            privileged_critic: true,
            eval_interval: 100,
            eval_episodes: 50,
        }
    }
}

impl<T: Real> TrainerConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("trainer.{m}")));
        if !(self.gamma > T::zero() && self.gamma <= T::one()) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.gae_lambda >= T::zero() && self.gae_lambda <= T::one()) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_epsilon > T::zero()) {
            return bad("clip_epsilon must be positive");
        }
        if !(self.kl_threshold > T::zero()) {
            return bad("kl_threshold must be positive");
        }
        if self.horizon == 0 || self.num_envs == 0 {
            return bad("horizon and num_envs must be at least 1");
        }
        if self.minibatches == 0 || self.minibatches > self.horizon * self.num_envs {
            return bad("minibatches must lie in [1, horizon * num_envs]");
        }
        if !(self.learning_rate > T::zero() && self.lr_min > T::zero() && self.lr_min <= self.lr_max) {
            return bad("learning rates must be positive with lr_min <= lr_max");
        }
        if !(self.max_grad_norm >= T::zero()) || !(self.entropy_coef >= T::zero()) || !(self.value_coef >= T::zero()) {
            return bad("max_grad_norm, entropy_coef and value_coef must be non-negative");
        }
        if self.eval_interval > 0 && self.eval_episodes == 0 {
            return bad("eval_episodes must be positive when evaluation is enabled");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden must list positive widths");
        }
        Ok(())
    }

    /// Environment steps gathered per iteration.
    pub fn steps_per_iteration(&self) -> usize {
        self.horizon * self.num_envs
    }

    pub fn iterations(&self) -> usize {
        self.total_steps.div_ceil(self.steps_per_iteration())
    }
}
