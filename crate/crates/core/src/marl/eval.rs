use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{env_rng, CatchEnv, EnvConfig, EpisodeSummary, Observations};
use crate::error::{Error, Result};
use crate::oracle::InterceptionOracle;
use crate::scalar::Real;
use crate::sim::{ARM_DOF, HAND_DOF};

use super::agent::{Agent, AgentRole};
use super::rollout::{split_actions, stack_policy_obs};

/// Anything that maps the current environment to arm and hand actions.
pub trait ControlPolicy<T: Real> {
    fn act(&mut self, env: &CatchEnv<T>, obs: &Observations<T>) -> Result<(Vec<T>, Vec<T>)>;
}

/// Trained agents acting through their deterministic means. Only policy
/// networks and policy observations are read.
pub struct DeterministicTeam<'a, T: Real> {
    pub agents: &'a [Agent<T>],
}

impl<T: Real> ControlPolicy<T> for DeterministicTeam<'_, T> {
    fn act(&mut self, _env: &CatchEnv<T>, obs: &Observations<T>) -> Result<(Vec<T>, Vec<T>)> {
        let roles: Vec<AgentRole> = self.agents.iter().map(Agent::role).collect();
        let mut actions = Vec::with_capacity(self.agents.len());
        for agent in self.agents {
            let x = stack_policy_obs(agent.role(), std::slice::from_ref(obs));
            actions.push(agent.mean_actions(&x, 1)?);
        }
        Ok(split_actions(&roles, &actions, 1))
    }
}

/// Uniform actions in `[-1, 1]`.
pub struct RandomPolicy {
    pub rng: ChaCha8Rng,
}

impl<T: Real> ControlPolicy<T> for RandomPolicy {
    fn act(&mut self, _env: &CatchEnv<T>, _obs: &Observations<T>) -> Result<(Vec<T>, Vec<T>)> {
        let mut draw = |n: usize| (0..n).map(|_| T::of(self.rng.random_range(-1.0..=1.0))).collect();
        Ok((draw(ARM_DOF), draw(HAND_DOF)))
    }
}

impl<T: Real> ControlPolicy<T> for InterceptionOracle {
    fn act(&mut self, env: &CatchEnv<T>, _obs: &Observations<T>) -> Result<(Vec<T>, Vec<T>)> {
        let (a, h) = InterceptionOracle::act(self, env)?;
        Ok((a.to_vec(), h.to_vec()))
    }
}

/// Outcomes of evaluation episodes. Rates are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Evaluation<T: Real> {
    pub episodes: Vec<EpisodeSummary<T>>,
    pub tracking_rate: f64,
    pub success_rate: f64,
    pub mean_length: f64,
}

impl<T: Real> Evaluation<T> {
    pub fn from_episodes(episodes: Vec<EpisodeSummary<T>>) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::Config("evaluation needs at least one episode".into()));
        }
        let n = episodes.len() as f64;
        let pct = |f: fn(&EpisodeSummary<T>) -> bool| 100.0 * episodes.iter().filter(|e| f(e)).count() as f64 / n;
        let tracking_rate = pct(|e| e.tracked);
        let success_rate = pct(|e| e.succeeded);
        let mean_length = episodes.iter().map(|e| e.length as f64).sum::<f64>() / n;
        Ok(Self {
            episodes,
            tracking_rate,
            success_rate,
            mean_length,
        })
    }
}

/// Runs `episodes` episodes; episode `i` draws from stream `i` of `seed`,
/// so results do not depend on the policy's own randomness.
pub fn evaluate<T: Real, P: ControlPolicy<T> + ?Sized>(
    cfg: &EnvConfig<T>,
    policy: &mut P,
    episodes: usize,
    seed: u64,
) -> Result<Evaluation<T>> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let mut out = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let mut env = CatchEnv::with_rng(cfg.clone(), env_rng(seed, i))?;
        let mut obs = env.reset()?;
        let (mut ra, mut rh, mut ru) = (T::zero(), T::zero(), T::zero());
        loop {
            let (a, h) = policy.act(&env, &obs)?;
            let o = env.step(&a, &h)?;
            ra += o.reward_arm;
            rh += o.reward_hand;
            ru += o.reward_unified().0;
            if o.done {
                break;
            }
            obs = o.observations;
        }
        let m = env.memory();
        out.push(EpisodeSummary {
            tracked: m.tracked(),
            succeeded: m.succeeded,
            dropped: m.dropped,
            length: m.steps,
            return_arm: ra,
            return_hand: rh,
            return_unified: ru,
        });
    }
    Evaluation::from_episodes(out)
}
