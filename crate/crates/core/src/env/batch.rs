use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Real;
use crate::sim::{ARM_DOF, HAND_DOF};

use super::{CatchEnv, EnvConfig, EventFlags, Observations};

/// Outcome of a finished episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EpisodeSummary<T: Real> {
    pub tracked: bool,
    pub succeeded: bool,
    pub dropped: bool,
    pub length: usize,
    pub return_arm: T,
    pub return_hand: T,
    pub return_unified: T,
}

/// Results of stepping every environment once.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStep<T: Real> {
    /// Next observations; for finished environments these come from the
    /// automatic reset.
    pub observations: Vec<Observations<T>>,
    pub rewards_arm: Vec<T>,
    pub rewards_hand: Vec<T>,
    pub rewards_unified: Vec<T>,
    pub flags: Vec<EventFlags>,
    /// Episode boundary after this step.
    pub dones: Vec<bool>,
    pub finished: Vec<Option<EpisodeSummary<T>>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(bound = "")]
struct Running<T: Real> {
    arm: T,
    hand: T,
    unified: T,
}

impl<T: Real> Default for Running<T> {
    fn default() -> Self {
        Self {
            arm: T::zero(),
            hand: T::zero(),
            unified: T::zero(),
        }
    }
}

/// Independent environments stepped together, in index order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BatchEnv<T: Real> {
    envs: Vec<CatchEnv<T>>,
    current: Vec<Observations<T>>,
    running: Vec<Running<T>>,
}

/// Random stream of environment `index` in a batch seeded with `seed`.
pub fn env_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

impl<T: Real> BatchEnv<T> {
    /// Builds and resets `n` environments.
    pub fn new(cfg: &EnvConfig<T>, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("environment count must be at least 1".into()));
        }
        let mut envs = Vec::with_capacity(n);
        let mut current = Vec::with_capacity(n);
        for i in 0..n {
            let mut env = CatchEnv::with_rng(cfg.clone(), env_rng(seed, i))?;
            current.push(env.reset()?);
            envs.push(env);
        }
        Ok(Self {
            envs,
            current,
            running: vec![Running::default(); n],
        })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn observations(&self) -> &[Observations<T>] {
        &self.current
    }

    pub fn envs(&self) -> &[CatchEnv<T>] {
        &self.envs
    }

    /// Steps every environment with row-major action matrices
    /// (`n × 6` and `n × 13`), resetting the ones that finish.
    pub fn step(&mut self, arm_actions: &[T], hand_actions: &[T]) -> Result<BatchStep<T>> {
        let n = self.envs.len();
        check_len("batched arm actions", n * ARM_DOF, arm_actions.len())?;
        check_len("batched hand actions", n * HAND_DOF, hand_actions.len())?;
        let mut out = BatchStep {
            observations: Vec::with_capacity(n),
            rewards_arm: Vec::with_capacity(n),
            rewards_hand: Vec::with_capacity(n),
            rewards_unified: Vec::with_capacity(n),
            flags: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            finished: Vec::with_capacity(n),
        };
        for (i, env) in self.envs.iter_mut().enumerate() {
            let o = env.step(
                &arm_actions[i * ARM_DOF..(i + 1) * ARM_DOF],
                &hand_actions[i * HAND_DOF..(i + 1) * HAND_DOF],
            )?;
            let (r_uni, _) = o.reward_unified();
            let run = &mut self.running[i];
            run.arm += o.reward_arm;
            run.hand += o.reward_hand;
            run.unified += r_uni;
            let summary = if o.done {
                let m = env.memory();
                let s = EpisodeSummary {
                    tracked: m.tracked(),
                    succeeded: m.succeeded,
                    dropped: m.dropped,
                    length: m.steps,
                    return_arm: run.arm,
                    return_hand: run.hand,
                    return_unified: run.unified,
                };
                *run = Running::default();
                self.current[i] = env.reset()?;
                Some(s)
            } else {
                self.current[i] = o.observations;
                None
            };
            out.observations.push(self.current[i].clone());
            out.rewards_arm.push(o.reward_arm);
            out.rewards_hand.push(o.reward_hand);
            out.rewards_unified.push(r_uni);
            out.flags.push(o.flags);
            out.dones.push(o.done);
            out.finished.push(summary);
        }
        Ok(out)
    }
}
