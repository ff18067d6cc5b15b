use rand::Rng;

use crate::env::{BatchEnv, EpisodeSummary, Observations, Variant, CRITIC_OBS_DIM, CRITIC_STEP_DIM, HISTORY};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sim::{ARM_DOF, HAND_DOF};

use super::agent::{Agent, AgentRole};
use super::buffer::RolloutBuffer;

/// Agent roles trained for a variant: arm and hand, or one unified agent.
pub fn roles_for(variant: Variant) -> &'static [AgentRole] {
    if variant.is_single_agent() {
        &[AgentRole::Unified]
    } else {
        &[AgentRole::Arm, AgentRole::Hand]
    }
}

/// Checks that `agents` form a valid team for `variant`.
pub fn check_team<T: Real>(agents: &[Agent<T>], variant: Variant) -> Result<()> {
    let roles: Vec<AgentRole> = agents.iter().map(Agent::role).collect();
    if roles != roles_for(variant) {
        return Err(Error::Config(format!(
            "agents {:?} do not match variant {}",
            roles.iter().map(|r| r.name()).collect::<Vec<_>>(),
            variant.name()
        )));
    }
    Ok(())
}

/// Zeroes the ground-truth object position in a critic observation.
pub fn mask_privileged<T: Real>(critic: &mut [T]) {
    debug_assert_eq!(critic.len(), CRITIC_OBS_DIM);
    for k in 0..HISTORY {
        let end = (k + 1) * CRITIC_STEP_DIM;
        critic[end - 3..end].iter_mut().for_each(|x| *x = T::zero());
    }
}

/// Buffers of one collection phase, in the order of the agents.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout<T: Real> {
    pub buffers: Vec<RolloutBuffer<T>>,
    /// Episodes that ended during collection, in completion order.
    pub finished: Vec<EpisodeSummary<T>>,
}

pub(crate) fn stack_policy_obs<T: Real>(role: AgentRole, obs: &[Observations<T>]) -> Vec<T> {
    let mut out = Vec::with_capacity(obs.len() * role.obs_dim());
    for o in obs {
        role.extend_observation(o, &mut out);
    }
    out
}

fn stack_critic_obs<T: Real>(obs: &[Observations<T>], privileged: bool) -> Vec<T> {
    let mut out = Vec::with_capacity(obs.len() * CRITIC_OBS_DIM);
    for o in obs {
        let start = out.len();
        out.extend_from_slice(&o.critic);
        if !privileged {
            mask_privileged(&mut out[start..]);
        }
    }
    out
}

/// Routes each agent's action rows into the arm and hand matrices.
pub(crate) fn split_actions<T: Real>(roles: &[AgentRole], actions: &[Vec<T>], n: usize) -> (Vec<T>, Vec<T>) {
    let mut arm = vec![T::zero(); n * ARM_DOF];
    let mut hand = vec![T::zero(); n * HAND_DOF];
    for (role, a) in roles.iter().zip(actions) {
        match role {
            AgentRole::Arm => arm.copy_from_slice(a),
            AgentRole::Hand => hand.copy_from_slice(a),
            AgentRole::Unified => {
                for (i, row) in a.chunks_exact(ARM_DOF + HAND_DOF).enumerate() {
                    arm[i * ARM_DOF..(i + 1) * ARM_DOF].copy_from_slice(&row[..ARM_DOF]);
                    hand[i * HAND_DOF..(i + 1) * HAND_DOF].copy_from_slice(&row[ARM_DOF..]);
                }
            }
        }
    }
    (arm, hand)
}

/// Steps every environment `horizon` times with actions sampled from the
/// agents' policies. Policies see only their own observations; the critic
/// observation (with or without the object position) feeds the values.
pub fn collect_rollouts<T: Real, R: Rng + ?Sized>(
    agents: &[Agent<T>],
    env: &mut BatchEnv<T>,
    horizon: usize,
    privileged_critic: bool,
    rng: &mut R,
) -> Result<Rollout<T>> {
    if agents.is_empty() || horizon == 0 {
        return Err(Error::Config("rollouts need at least one agent and one step".into()));
    }
    let n = env.len();
    let roles: Vec<AgentRole> = agents.iter().map(Agent::role).collect();
    let mut buffers: Vec<RolloutBuffer<T>> = agents
        .iter()
        .map(|a| RolloutBuffer::new(n, a.spec.obs_dim, a.spec.critic_dim, a.spec.action_dim, horizon))
        .collect();
    let mut finished = Vec::new();
    for _ in 0..horizon {
        let obs = env.observations().to_vec();
        let critic = stack_critic_obs(&obs, privileged_critic);
        let mut actions = Vec::with_capacity(agents.len());
        for (agent, buf) in agents.iter().zip(&mut buffers) {
            let pobs = stack_policy_obs(agent.role(), &obs);
            let (a, lp) = agent.sample_actions(&pobs, n, rng)?;
            let v = agent.values(&critic, n)?;
            buf.observations.extend(pobs);
            buf.critic_observations.extend_from_slice(&critic);
            buf.actions.extend_from_slice(&a);
            buf.log_probs.extend(lp);
            buf.values.extend(v);
            actions.push(a);
        }
        let (arm, hand) = split_actions(&roles, &actions, n);
        let step = env.step(&arm, &hand)?;
        for (role, buf) in roles.iter().zip(&mut buffers) {
            let r = match role {
                AgentRole::Arm => &step.rewards_arm,
                AgentRole::Hand => &step.rewards_hand,
                AgentRole::Unified => &step.rewards_unified,
            };
            buf.rewards.extend_from_slice(r);
            buf.dones.extend_from_slice(&step.dones);
        }
        finished.extend(step.finished.into_iter().flatten());
    }
    let critic = stack_critic_obs(env.observations(), privileged_critic);
    for (agent, buf) in agents.iter().zip(&mut buffers) {
        buf.bootstrap = agent.values(&critic, n)?;
    }
    Ok(Rollout { buffers, finished })
}
