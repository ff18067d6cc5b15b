use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Observations, ARM_OBS_DIM, CRITIC_OBS_DIM, HAND_OBS_DIM, UNIFIED_ACTION_DIM, UNIFIED_OBS_DIM};
use crate::error::{check_len, Error, Result};
use crate::nn::{AdamState, GaussianHead, Mlp, MlpSpec, RunningNorm};
use crate::scalar::Real;
use crate::sim::{ARM_DOF, HAND_DOF};

use super::buffer::{normalize_advantages, RolloutBuffer};
use super::config::{KlMode, TrainerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentRole {
    Arm,
    Hand,
    /// Single agent driving all 19 joints.
    Unified,
}

impl AgentRole {
    pub fn name(self) -> &'static str {
        match self {
            Self::Arm => "arm",
            Self::Hand => "hand",
            Self::Unified => "unified",
        }
    }

    pub fn obs_dim(self) -> usize {
        match self {
            Self::Arm => ARM_OBS_DIM,
            Self::Hand => HAND_OBS_DIM,
            Self::Unified => UNIFIED_OBS_DIM,
        }
    }

    pub fn action_dim(self) -> usize {
        match self {
            Self::Arm => ARM_DOF,
            Self::Hand => HAND_DOF,
            Self::Unified => UNIFIED_ACTION_DIM,
        }
    }

    /// Appends this role's policy input to `out`.
    pub fn extend_observation<T: Real>(self, obs: &Observations<T>, out: &mut Vec<T>) {
        match self {
            Self::Arm => out.extend_from_slice(&obs.arm),
            Self::Hand => out.extend_from_slice(&obs.hand),
            Self::Unified => {
                out.extend_from_slice(&obs.arm);
                out.extend_from_slice(&obs.hand);
            }
        }
    }
}

/// Widths and networks of one agent. Every critic reads the full critic
/// observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub role: AgentRole,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub critic_dim: usize,
    pub policy: MlpSpec,
    pub critic: MlpSpec,
}

impl AgentSpec {
    pub fn for_role<T: Real>(role: AgentRole, cfg: &TrainerConfig<T>) -> Self {
        let (obs_dim, action_dim) = (role.obs_dim(), role.action_dim());
        Self {
            role,
            obs_dim,
            action_dim,
            critic_dim: CRITIC_OBS_DIM,
            policy: MlpSpec::new(obs_dim, action_dim)
                .with_hidden(&cfg.hidden)
                .with_activation(cfg.activation)
                .with_output_gain(cfg.policy_output_gain),
            critic: MlpSpec::new(CRITIC_OBS_DIM, 1)
                .with_hidden(&cfg.hidden)
                .with_activation(cfg.activation),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        self.critic.validate()?;
        if self.policy.input != self.obs_dim || self.policy.output != self.action_dim {
            return Err(Error::Config(format!("{} policy network does not match the agent widths", self.role.name())));
        }
        if self.critic.input != self.critic_dim || self.critic.output != 1 {
            return Err(Error::Config(format!("{} critic network does not match the agent widths", self.role.name())));
        }
        Ok(())
    }
}

/// Policy, value function and optimizer state of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Agent<T: Real> {
    pub spec: AgentSpec,
    pub policy: Mlp<T>,
    pub head: GaussianHead<T>,
    pub critic: Mlp<T>,
    /// Covers the policy parameters followed by the log-std vector.
    pub policy_opt: AdamState<T>,
    pub critic_opt: AdamState<T>,
    pub lr: T,
    pub obs_norm: Option<RunningNorm>,
    pub critic_norm: Option<RunningNorm>,
    /// Scale of the returns the critic is trained on.
    pub value_norm: Option<RunningNorm>,
}

impl<T: Real> Agent<T> {
    pub fn new<R: Rng + ?Sized>(spec: AgentSpec, cfg: &TrainerConfig<T>, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let policy = Mlp::new(spec.policy.clone(), rng)?;
        let critic = Mlp::new(spec.critic.clone(), rng)?;
        let head = GaussianHead::new(spec.action_dim, cfg.init_log_std);
        let policy_opt = AdamState::new(policy.params().len() + spec.action_dim, cfg.learning_rate);
        let critic_opt = AdamState::new(critic.params().len(), cfg.learning_rate);
        Ok(Self {
            policy,
            head,
            critic,
            policy_opt,
            critic_opt,
            lr: cfg.learning_rate,
            obs_norm: cfg.normalize_observations.then(|| RunningNorm::new(spec.obs_dim)),
            critic_norm: cfg.normalize_observations.then(|| RunningNorm::new(spec.critic_dim)),
            value_norm: cfg.normalize_values.then(|| RunningNorm::new(1)),
            spec,
        })
    }

    pub fn role(&self) -> AgentRole {
        self.spec.role
    }

    /// Policy network input for raw observations.
    pub fn policy_input(&self, obs: &[T]) -> Vec<T> {
        match &self.obs_norm {
            Some(n) => n.normalize(obs),
            None => obs.to_vec(),
        }
    }

    pub fn critic_input(&self, critic_obs: &[T]) -> Vec<T> {
        match &self.critic_norm {
            Some(n) => n.normalize(critic_obs),
            None => critic_obs.to_vec(),
        }
    }

    /// Action means for a row-major batch of policy observations.
    pub fn mean_actions(&self, obs: &[T], batch: usize) -> Result<Vec<T>> {
        self.policy.predict(&self.policy_input(obs), batch)
    }

    /// Sampled actions and their log-probabilities.
    pub fn sample_actions<R: Rng + ?Sized>(&self, obs: &[T], batch: usize, rng: &mut R) -> Result<(Vec<T>, Vec<T>)> {
        let mean = self.mean_actions(obs, batch)?;
        let a = self.spec.action_dim;
        let mut actions = Vec::with_capacity(batch * a);
        let mut log_probs = Vec::with_capacity(batch);
        for m in mean.chunks_exact(a) {
            let (act, lp) = self.head.sample(m, rng)?;
            actions.extend(act);
            log_probs.push(lp);
        }
        Ok((actions, log_probs))
    }

    /// Value estimates on the scale of the returns.
    pub fn values(&self, critic_obs: &[T], batch: usize) -> Result<Vec<T>> {
        let mut v = self.critic.predict(&self.critic_input(critic_obs), batch)?;
        if let Some(n) = &self.value_norm {
            n.denormalize(&mut v);
        }
        Ok(v)
    }

    /// Folds a finalized buffer's returns into the value statistics. Call
    /// before [`ppo_update`].
    pub fn observe_returns(&mut self, buffer: &RolloutBuffer<T>) -> Result<()> {
        match &mut self.value_norm {
            Some(n) => n.update(&buffer.returns),
            None => Ok(()),
        }
    }

    /// Folds a buffer's inputs into the observation statistics. Call after
    /// [`ppo_update`] so that stored log-probabilities stay valid during it.
    pub fn observe_inputs(&mut self, buffer: &RolloutBuffer<T>) -> Result<()> {
        if let Some(n) = &mut self.obs_norm {
            n.update(&buffer.observations)?;
        }
        if let Some(n) = &mut self.critic_norm {
            n.update(&buffer.critic_observations)?;
        }
        Ok(())
    }
}

/// Means over the minibatches of one update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct UpdateStats<T: Real> {
    pub policy_loss: T,
    pub value_loss: T,
    pub entropy: T,
    pub approx_kl: T,
    pub clip_fraction: T,
    /// Learning rate after the update.
    pub lr: T,
    pub minibatches: usize,
    /// Minibatches dropped because their loss was not finite.
    pub skipped: usize,
}

/// Multiplies `lr` by 1/1.5 when the KL exceeds twice the threshold, by 1.5
/// when it falls below half of it, and keeps it inside `[lo, hi]`.
pub fn kl_adaptive_lr<T: Real>(approx_kl: T, threshold: T, lr: T, lo: T, hi: T) -> T {
    let factor = T::of(1.5);
    let next = if approx_kl > T::of(2.0) * threshold {
        lr / factor
    } else if approx_kl < threshold * T::of(0.5) {
        lr * factor
    } else {
        lr
    };
    next.max(lo).min(hi)
}

/// Result of [`clipped_surrogate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate<T: Real> {
    /// `mean(min(r A, clip(r, 1-ε, 1+ε) A))`.
    pub objective: T,
    /// Derivative of `objective` with respect to each new log-probability.
    pub grad_log_prob: Vec<T>,
    pub clip_fraction: T,
    /// `mean((r - 1) - ln r)`, a non-negative estimate of KL(old ‖ new).
    pub approx_kl: T,
}

pub fn clipped_surrogate<T: Real>(logp_new: &[T], logp_old: &[T], adv: &[T], eps: T) -> Result<Surrogate<T>> {
    let n = logp_new.len();
    check_len("surrogate old log-probs", n, logp_old.len())?;
    check_len("surrogate advantages", n, adv.len())?;
    if n == 0 {
        return Err(Error::Contract("surrogate of an empty batch".into()));
    }
    let inv = T::one() / T::of_usize(n);
    let (lo, hi) = (T::one() - eps, T::one() + eps);
    let mut objective = T::zero();
    let mut clipped = 0usize;
    let mut kl = T::zero();
    let mut grad = Vec::with_capacity(n);
    for i in 0..n {
        let log_ratio = logp_new[i] - logp_old[i];
        let r = log_ratio.exp();
        let a = adv[i];
        let unclipped = r * a;
        let bounded = r.max(lo).min(hi) * a;
        if unclipped <= bounded {
            objective += unclipped;
            // d(r A)/d logp_new = r A
            grad.push(unclipped * inv);
        } else {
            objective += bounded;
            grad.push(T::zero());
        }
        if r < lo || r > hi {
            clipped += 1;
        }
        kl += (r - T::one()) - log_ratio;
    }
    Ok(Surrogate {
        objective: objective * inv,
        grad_log_prob: grad,
        clip_fraction: T::of_usize(clipped) * inv,
        approx_kl: kl * inv,
    })
}

/// Scales `grads` down so their Euclidean norm is at most `max_norm`.
fn clip_grad_norm<T: Real>(grads: &mut [T], max_norm: T) {
    if max_norm <= T::zero() {
        return;
    }
    let norm = crate::scalar::sq_norm(grads).sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
}

fn gather<T: Real>(src: &[T], width: usize, rows: &[usize]) -> Vec<T> {
    let mut out = Vec::with_capacity(rows.len() * width);
    for &r in rows {
        out.extend_from_slice(&src[r * width..(r + 1) * width]);
    }
    out
}

/// Splits `0..n` into `k` contiguous parts whose sizes differ by at most one.
fn split_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// Clipped-surrogate PPO epochs over one finalized buffer.
pub fn ppo_update<T: Real, R: Rng + ?Sized>(
    agent: &mut Agent<T>,
    buffer: &RolloutBuffer<T>,
    cfg: &TrainerConfig<T>,
    rng: &mut R,
) -> Result<UpdateStats<T>> {
    buffer.validate()?;
    if !buffer.has_advantages() {
        return Err(Error::Contract("ppo_update needs a finalized buffer".into()));
    }
    check_len("buffer observation width", agent.spec.obs_dim, buffer.obs_dim)?;
    check_len("buffer action width", agent.spec.action_dim, buffer.action_dim)?;
    check_len("buffer critic width", agent.spec.critic_dim, buffer.critic_dim)?;
    let n = buffer.len();
    let (od, cd, ad) = (buffer.obs_dim, buffer.critic_dim, buffer.action_dim);
    let n_policy = agent.policy.params().len();
    let mut idx: Vec<usize> = (0..n).collect();
    let sizes = split_sizes(n, cfg.minibatches.min(n).max(1));

    let mut sum = [T::zero(); 5];
    let mut done = 0usize;
    let mut skipped = 0usize;
    for _epoch in 0..cfg.epochs {
        idx.shuffle(rng);
        let mut epoch_kl = T::zero();
        let mut epoch_batches = 0usize;
        let mut start = 0;
        for &size in &sizes {
            let rows = &idx[start..start + size];
            start += size;
            let obs = agent.policy_input(&gather(&buffer.observations, od, rows));
            let cobs = agent.critic_input(&gather(&buffer.critic_observations, cd, rows));
            let actions = gather(&buffer.actions, ad, rows);
            let old: Vec<T> = rows.iter().map(|&r| buffer.log_probs[r]).collect();
            let mut returns: Vec<T> = rows.iter().map(|&r| buffer.returns[r]).collect();
            if let Some(n) = &agent.value_norm {
                returns = n.normalize(&returns);
            }
            let mut adv: Vec<T> = rows.iter().map(|&r| buffer.advantages[r]).collect();
            normalize_advantages(&mut adv);

            let (mean, pcache) = agent.policy.forward(&obs, size)?;
            let mut logp = Vec::with_capacity(size);
            for i in 0..size {
                logp.push(agent.head.log_prob(&mean[i * ad..(i + 1) * ad], &actions[i * ad..(i + 1) * ad])?);
            }
            let sur = clipped_surrogate(&logp, &old, &adv, cfg.clip_epsilon)?;
            let entropy = agent.head.entropy();
            let (values, vcache) = agent.critic.forward(&cobs, size)?;
            let inv = T::one() / T::of_usize(size);
            let value_loss = values
                .iter()
                .zip(&returns)
                .map(|(&v, &r)| (v - r) * (v - r))
                .sum::<T>()
                * inv;
            let policy_loss = -sur.objective;
            let total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy;
            if !total.is_finite() {
                log::warn!("{} agent: non-finite loss, minibatch skipped", agent.role().name());
                skipped += 1;
                continue;
            }

            // Policy side: loss = -objective - c_e * entropy.
            let mut d_mean = vec![T::zero(); size * ad];
            let mut d_log_std = vec![T::zero(); ad];
            let mut gm = vec![T::zero(); ad];
            let mut gs = vec![T::zero(); ad];
            for i in 0..size {
                let g = sur.grad_log_prob[i];
                if g == T::zero() {
                    continue;
                }
                agent
                    .head
                    .log_prob_grads(&mean[i * ad..(i + 1) * ad], &actions[i * ad..(i + 1) * ad], &mut gm, &mut gs);
                for j in 0..ad {
                    d_mean[i * ad + j] = -g * gm[j];
                    d_log_std[j] -= g * gs[j];
                }
            }
            for (j, d) in d_log_std.iter_mut().enumerate() {
                *d -= cfg.entropy_coef * agent.head.entropy_grad(j);
            }
            let pg = agent.policy.backward(&pcache, &d_mean)?;
            let mut policy_grads = pg.params;
            policy_grads.extend_from_slice(&d_log_std);

            let dv: Vec<T> = values
                .iter()
                .zip(&returns)
                .map(|(&v, &r)| cfg.value_coef * T::of(2.0) * (v - r) * inv)
                .collect();
            let mut critic_grads = agent.critic.backward(&vcache, &dv)?.params;

            clip_grad_norm(&mut policy_grads, cfg.max_grad_norm);
            clip_grad_norm(&mut critic_grads, cfg.max_grad_norm);

            agent.policy_opt.lr = agent.lr;
            agent.critic_opt.lr = agent.lr;
            let mut flat: Vec<T> = Vec::with_capacity(n_policy + ad);
            flat.extend_from_slice(agent.policy.params());
            flat.extend_from_slice(&agent.head.log_std);
            if agent.policy_opt.update(&mut flat, &policy_grads)? {
                agent.policy.params_mut().copy_from_slice(&flat[..n_policy]);
                agent.head.log_std.copy_from_slice(&flat[n_policy..]);
                agent.head.clamp_in_place();
            }
            agent.critic_opt.update(agent.critic.params_mut(), &critic_grads)?;

            for (s, v) in sum
                .iter_mut()
                .zip([policy_loss, value_loss, entropy, sur.approx_kl, sur.clip_fraction])
            {
                *s += v;
            }
            epoch_kl += sur.approx_kl;
            epoch_batches += 1;
            done += 1;
        }
        if epoch_batches == 0 {
            continue;
        }
        let kl = epoch_kl / T::of_usize(epoch_batches);
        match cfg.kl_mode {
            KlMode::AdaptiveLr => agent.lr = kl_adaptive_lr(kl, cfg.kl_threshold, agent.lr, cfg.lr_min, cfg.lr_max),
            KlMode::EarlyStop if kl > T::of(1.5) * cfg.kl_threshold => break,
            KlMode::EarlyStop => {}
        }
    }
    let d = T::of_usize(done.max(1));
    Ok(UpdateStats {
        policy_loss: sum[0] / d,
        value_loss: sum[1] / d,
        entropy: sum[2] / d,
        approx_kl: sum[3] / d,
        clip_fraction: sum[4] / d,
        lr: agent.lr,
        minibatches: done,
        skipped,
    })
}
