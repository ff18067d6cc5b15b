use crate::error::{check_len, Result};
use crate::scalar::Real;

/// One agent's transitions, time-major: row `t * n_envs + e` is step `t`
/// of environment `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer<T: Real> {
    pub n_envs: usize,
    pub obs_dim: usize,
    pub critic_dim: usize,
    pub action_dim: usize,
    pub observations: Vec<T>,
    pub critic_observations: Vec<T>,
    pub actions: Vec<T>,
    pub log_probs: Vec<T>,
    pub rewards: Vec<T>,
    pub values: Vec<T>,
    /// Episode ended at this step; the next row of that env starts fresh.
    pub dones: Vec<bool>,
    /// Critic estimates for the observations after the last step.
    pub bootstrap: Vec<T>,
    pub advantages: Vec<T>,
    pub returns: Vec<T>,
}

impl<T: Real> RolloutBuffer<T> {
    pub fn new(n_envs: usize, obs_dim: usize, critic_dim: usize, action_dim: usize, horizon: usize) -> Self {
        let cap = n_envs * horizon;
        Self {
            n_envs,
            obs_dim,
            critic_dim,
            action_dim,
            observations: Vec::with_capacity(cap * obs_dim),
            critic_observations: Vec::with_capacity(cap * critic_dim),
            actions: Vec::with_capacity(cap * action_dim),
            log_probs: Vec::with_capacity(cap),
            rewards: Vec::with_capacity(cap),
            values: Vec::with_capacity(cap),
            dones: Vec::with_capacity(cap),
            bootstrap: Vec::new(),
            advantages: Vec::new(),
            returns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.len() / self.n_envs.max(1)
    }

    pub fn has_advantages(&self) -> bool {
        !self.advantages.is_empty()
    }

    /// Checks that every per-step sequence has the same length.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        check_len("buffer observations", n * self.obs_dim, self.observations.len())?;
        check_len("buffer critic observations", n * self.critic_dim, self.critic_observations.len())?;
        check_len("buffer actions", n * self.action_dim, self.actions.len())?;
        check_len("buffer log-probs", n, self.log_probs.len())?;
        check_len("buffer values", n, self.values.len())?;
        check_len("buffer dones", n, self.dones.len())?;
        if !n.is_multiple_of(self.n_envs) {
            return Err(crate::Error::Contract("buffer length is not a multiple of the env count".into()));
        }
        Ok(())
    }

    /// Fills `advantages` and `returns` from the stored rewards and values.
    pub fn finalize(&mut self, gamma: T, lambda: T) -> Result<()> {
        self.validate()?;
        let (adv, ret) = compute_gae(&self.rewards, &self.values, &self.dones, &self.bootstrap, self.n_envs, gamma, lambda)?;
        self.advantages = adv;
        self.returns = ret;
        Ok(())
    }
}

/// Generalized advantage estimation over time-major data:
///
/// `δ_t = r_t + γ V_{t+1} (1 - done_t) - V_t`,
/// `A_t = δ_t + γ λ (1 - done_t) A_{t+1}`, returns `A + V`.
///
/// `bootstrap[e]` is the value of the state following the last stored step
/// of env `e`.
pub fn compute_gae<T: Real>(
    rewards: &[T],
    values: &[T],
    dones: &[bool],
    bootstrap: &[T],
    n_envs: usize,
    gamma: T,
    lambda: T,
) -> Result<(Vec<T>, Vec<T>)> {
    let n = rewards.len();
    check_len("GAE values", n, values.len())?;
    check_len("GAE dones", n, dones.len())?;
    check_len("GAE bootstrap", n_envs, bootstrap.len())?;
    if n_envs == 0 || !n.is_multiple_of(n_envs) {
        return Err(crate::Error::Contract("GAE length is not a multiple of the env count".into()));
    }
    let steps = n / n_envs;
    let mut adv = vec![T::zero(); n];
    for e in 0..n_envs {
        let mut next_value = bootstrap[e];
        let mut next_adv = T::zero();
        for t in (0..steps).rev() {
            let i = t * n_envs + e;
            let live = if dones[i] { T::zero() } else { T::one() };
            let delta = rewards[i] + gamma * next_value * live - values[i];
            next_adv = delta + gamma * lambda * live * next_adv;
            adv[i] = next_adv;
            next_value = values[i];
        }
    }
    let ret = adv.iter().zip(values).map(|(&a, &v)| a + v).collect();
    Ok((adv, ret))
}

/// Shifts and scales to zero mean and unit (population) variance.
pub fn normalize_advantages<T: Real>(adv: &mut [T]) {
    if adv.is_empty() {
        return;
    }
    let n = T::of_usize(adv.len());
    let mean = adv.iter().copied().sum::<T>() / n;
    let var = adv.iter().map(|&a| (a - mean) * (a - mean)).sum::<T>() / n;
    let std = var.sqrt();
    let scale = if std > T::of(1e-12) { T::one() / std } else { T::one() };
    adv.iter_mut().for_each(|a| *a = (*a - mean) * scale);
}
