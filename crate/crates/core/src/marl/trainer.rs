use std::collections::VecDeque;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::env::{env_rng, BatchEnv, EnvConfig, EpisodeSummary, Variant};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{read_versioned, write_versioned};
use crate::scalar::Real;

use super::agent::{ppo_update, Agent, AgentSpec, UpdateStats};
use super::config::TrainerConfig;
use super::eval::{evaluate, DeterministicTeam, Evaluation};
use super::rollout::{check_team, collect_rollouts, roles_for};

/// Finished training episodes that feed the running rates and returns.
pub const METRICS_WINDOW: usize = 100;

const INIT_SALT: u64 = 0x1a17_0000_0000_0001;
const ITER_SALT: u64 = 0x1a17_0000_0000_0002;
const EVAL_SALT: u64 = 0x1a17_0000_0000_0003;

/// One line of the metrics log. Rewards and rates are over the last
/// [`METRICS_WINDOW`] finished training episodes (NaN before the first one);
/// rates are percentages. A single-agent run repeats its KL and learning
/// rate in both agent columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub env_steps: usize,
    pub mean_reward_arm: f64,
    pub mean_reward_hand: f64,
    pub approx_kl_arm: f64,
    pub approx_kl_hand: f64,
    pub lr_arm: f64,
    pub lr_hand: f64,
    pub tracking_rate: f64,
    pub success_rate: f64,
}

pub const METRICS_HEADER: [&str; 10] = [
    "iteration",
    "env_steps",
    "mean_reward_arm",
    "mean_reward_hand",
    "approx_kl_arm",
    "approx_kl_hand",
    "lr_arm",
    "lr_hand",
    "tracking_rate",
    "success_rate",
];

/// Deterministic evaluation taken during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    pub iteration: usize,
    pub env_steps: usize,
    pub tracking_rate: f64,
    pub success_rate: f64,
    pub mean_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutput<T: Real> {
    pub row: MetricsRow,
    /// One entry per agent.
    pub stats: Vec<UpdateStats<T>>,
    pub snapshot: Option<EvalSnapshot>,
}

/// Complete training state; serializing it mid-run and resuming gives the
/// same results as an uninterrupted run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Trainer<T: Real> {
    cfg: TrainerConfig<T>,
    env_cfg: EnvConfig<T>,
    agents: Vec<Agent<T>>,
    env: BatchEnv<T>,
    iteration: usize,
    env_steps: usize,
    recent: VecDeque<EpisodeSummary<T>>,
}

impl<T: Real> Trainer<T> {
    pub fn new(cfg: TrainerConfig<T>, env_cfg: EnvConfig<T>) -> Result<Self> {
        cfg.validate()?;
        env_cfg.validate()?;
        let mut rng = env_rng(cfg.seed ^ INIT_SALT, 0);
        let agents = roles_for(env_cfg.variant)
            .iter()
            .map(|&role| Agent::new(AgentSpec::for_role(role, &cfg), &cfg, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let env = BatchEnv::new(&env_cfg, cfg.num_envs, cfg.seed)?;
        Ok(Self {
            cfg,
            env_cfg,
            agents,
            env,
            iteration: 0,
            env_steps: 0,
            recent: VecDeque::with_capacity(METRICS_WINDOW),
        })
    }

    pub fn config(&self) -> &TrainerConfig<T> {
        &self.cfg
    }

    pub fn env_config(&self) -> &EnvConfig<T> {
        &self.env_cfg
    }

    pub fn variant(&self) -> Variant {
        self.env_cfg.variant
    }

    pub fn agents(&self) -> &[Agent<T>] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [Agent<T>] {
        &mut self.agents
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    pub fn is_finished(&self) -> bool {
        self.env_steps >= self.cfg.total_steps
    }

    /// Collects one rollout, then runs PPO for every agent on its own
    /// buffer. State only changes when the whole iteration succeeds.
    pub fn iterate(&mut self) -> Result<IterationOutput<T>> {
        let cfg = &self.cfg;
        let mut rng = env_rng(cfg.seed ^ ITER_SALT, self.iteration);
        let mut env = self.env.clone();
        let mut rollout = collect_rollouts(&self.agents, &mut env, cfg.horizon, cfg.privileged_critic, &mut rng)?;
        let mut agents = self.agents.clone();
        let mut stats = Vec::with_capacity(agents.len());
        for (agent, buf) in agents.iter_mut().zip(&mut rollout.buffers) {
            buf.finalize(cfg.gamma, cfg.gae_lambda)?;
            agent.observe_returns(buf)?;
            stats.push(ppo_update(agent, buf, cfg, &mut rng)?);
            agent.observe_inputs(buf)?;
        }

        self.env = env;
        self.agents = agents;
        self.iteration += 1;
        self.env_steps += cfg.steps_per_iteration();
        for ep in rollout.finished {
            if self.recent.len() == METRICS_WINDOW {
                self.recent.pop_front();
            }
            self.recent.push_back(ep);
        }
        let row = self.metrics_row(&stats);
        let snapshot = if self.cfg.eval_interval > 0 && self.iteration.is_multiple_of(self.cfg.eval_interval) {
            let ev = self.evaluate(self.cfg.eval_episodes, self.cfg.seed ^ EVAL_SALT)?;
            Some(EvalSnapshot {
                iteration: self.iteration,
                env_steps: self.env_steps,
                tracking_rate: ev.tracking_rate,
                success_rate: ev.success_rate,
                mean_length: ev.mean_length,
            })
        } else {
            None
        };
        Ok(IterationOutput { row, stats, snapshot })
    }

    fn metrics_row(&self, stats: &[UpdateStats<T>]) -> MetricsRow {
        let n = self.recent.len() as f64;
        let mean = |f: fn(&EpisodeSummary<T>) -> f64| {
            if self.recent.is_empty() {
                f64::NAN
            } else {
                self.recent.iter().map(f).sum::<f64>() / n
            }
        };
        let first = stats[0];
        let last = stats[stats.len() - 1];
        MetricsRow {
            iteration: self.iteration,
            env_steps: self.env_steps,
            mean_reward_arm: mean(|e| e.return_arm.as_f64()),
            mean_reward_hand: mean(|e| e.return_hand.as_f64()),
            approx_kl_arm: first.approx_kl.as_f64(),
            approx_kl_hand: last.approx_kl.as_f64(),
            lr_arm: first.lr.as_f64(),
            lr_hand: last.lr.as_f64(),
            tracking_rate: 100.0 * mean(|e| f64::from(u8::from(e.tracked))),
            success_rate: 100.0 * mean(|e| f64::from(u8::from(e.succeeded))),
        }
    }

    /// Deterministic evaluation of the current policies.
    pub fn evaluate(&self, episodes: usize, seed: u64) -> Result<Evaluation<T>> {
        let mut team = DeterministicTeam { agents: &self.agents };
        evaluate(&self.env_cfg, &mut team, episodes, seed)
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        write_versioned(w, "trainer", self)
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let t: Self = read_versioned(r, "trainer")?;
        t.cfg.validate()?;
        t.env_cfg.validate()?;
        check_team(&t.agents, t.env_cfg.variant)?;
        Ok(t)
    }
}

/// Runs iterations until the step budget is spent, handing each output to
/// `sink` as it is produced.
pub fn run_training<T: Real, F>(trainer: &mut Trainer<T>, mut sink: F) -> Result<()>
where
    F: FnMut(&Trainer<T>, &IterationOutput<T>) -> Result<()>,
{
    while !trainer.is_finished() {
        let out = trainer.iterate()?;
        sink(trainer, &out)?;
    }
    Ok(())
}

/// Trains separate arm and hand agents with centralized critics.
pub fn train_mappo<T: Real, F>(cfg: TrainerConfig<T>, env_cfg: EnvConfig<T>, sink: F) -> Result<Trainer<T>>
where
    F: FnMut(&Trainer<T>, &IterationOutput<T>) -> Result<()>,
{
    if env_cfg.variant.is_single_agent() {
        return Err(Error::Config(format!("variant {} is single-agent", env_cfg.variant.name())));
    }
    let mut t = Trainer::new(cfg, env_cfg)?;
    run_training(&mut t, sink)?;
    Ok(t)
}

/// Trains one agent over the concatenated observations and all 19 joints.
pub fn train_single_agent<T: Real, F>(cfg: TrainerConfig<T>, env_cfg: EnvConfig<T>, sink: F) -> Result<Trainer<T>>
where
    F: FnMut(&Trainer<T>, &IterationOutput<T>) -> Result<()>,
{
    if !env_cfg.variant.is_single_agent() {
        return Err(Error::Config(format!("variant {} is multi-agent", env_cfg.variant.name())));
    }
    let mut t = Trainer::new(cfg, env_cfg)?;
    run_training(&mut t, sink)?;
    Ok(t)
}

/// Writes the metrics log with its header.
pub fn write_metrics<W: Write>(w: W, rows: &[MetricsRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(METRICS_HEADER).map_err(csv_err)?;
    for r in rows {
        wr.write_record(metrics_record(r)).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

/// Fields of one row in header order, floats in round-trip form.
pub fn metrics_record(r: &MetricsRow) -> [String; 10] {
    [
        r.iteration.to_string(),
        r.env_steps.to_string(),
        r.mean_reward_arm.to_string(),
        r.mean_reward_hand.to_string(),
        r.approx_kl_arm.to_string(),
        r.approx_kl_hand.to_string(),
        r.lr_arm.to_string(),
        r.lr_hand.to_string(),
        r.tracking_rate.to_string(),
        r.success_rate.to_string(),
    ]
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv { row: 0, msg: e.to_string() }
}
