use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use pixelcatch::env::trace::{write_trace, TraceRecord};
use pixelcatch::env::{env_rng, CatchEnv, EnvConfig, EpisodeSummary, Variant};
use pixelcatch::marl::{
    check_team, evaluate, Agent, ControlPolicy, DeterministicTeam, EvalSnapshot, Evaluation, MetricsRow, RandomPolicy,
    Trainer,
};
use pixelcatch::oracle::InterceptionOracle;
use pixelcatch::sim::sysid::{read_trajectories_csv, sysid_fit, GainScales, SysidReport};
use pixelcatch::sim::{JointChainModel, ARM_DOF, HAND_DOF};
use pixelcatch::Real;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::*;
use crate::config::{ExperimentConfig, Precision};

/// Which controller drives evaluation and rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicySource {
    /// Deterministic means of a trained checkpoint.
    #[default]
    Trained,
    /// Analytic interception from ground-truth object state.
    Oracle,
    /// Uniform random actions.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub resume: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub iterations: usize,
    pub env_steps: usize,
    pub final_row: Option<MetricsRow>,
}

/// Trains the variant's agents, writing the frozen config, metrics,
/// evaluation snapshots and checkpoints under the output directory.
pub fn cmd_train(cfg: &ExperimentConfig, opts: &TrainOptions) -> Result<TrainSummary> {
    match cfg.precision {
        Precision::F32 => train_as::<f32>(cfg, opts),
        Precision::F64 => train_as::<f64>(cfg, opts),
    }
}

fn train_as<T: Real>(cfg: &ExperimentConfig, opts: &TrainOptions) -> Result<TrainSummary> {
    let out = &cfg.output_dir;
    let fp = cfg.fingerprint();
    let ckpt = checkpoint_path(out);
    let (mut trainer, mut rows, mut snaps) = if opts.resume && ckpt.exists() {
        let t: Trainer<T> = read_stamped(&ckpt, "trainer", &fp)?;
        let mut rows = read_metrics_csv(&out.join(METRICS_FILE), &fp)?;
        rows.truncate(t.iteration());
        let mut snaps = read_snapshots_csv(&out.join(EVALUATIONS_FILE), &fp).unwrap_or_default();
        snaps.retain(|s| s.iteration <= t.iteration());
        info!("resuming at iteration {} ({} env steps)", t.iteration(), t.env_steps());
        (t, rows, snaps)
    } else {
        let (env, trainer) = cfg.cast::<T>()?;
        (Trainer::new(trainer, env)?, Vec::new(), Vec::new())
    };
    write_atomic(&out.join(CONFIG_FILE), |w| {
        write_fingerprint_line(w, &fp)?;
        w.write_all(cfg.to_toml()?.as_bytes())?;
        Ok(())
    })?;
    info!(
        "training {} for {} env steps ({} iterations), fingerprint {}",
        cfg.variant,
        cfg.total_steps,
        trainer.config().iterations(),
        short(&fp)
    );

    let result = loop {
        if trainer.is_finished() {
            break Ok(());
        }
        let out_it = match trainer.iterate() {
            Ok(o) => o,
            Err(e) => break Err(anyhow::Error::from(e).context(format!("iteration {}", trainer.iteration() + 1))),
        };
        let r = out_it.row;
        rows.push(r);
        if let Some(s) = out_it.snapshot {
            info!(
                "eval at {} steps: T.R. {:.1}% S.R. {:.1}%",
                s.env_steps, s.tracking_rate, s.success_rate
            );
            snaps.push(s);
        }
        log::debug!(
            "it {} steps {} reward arm {:.3} hand {:.3} kl {:.4}/{:.4} lr {:.2e}/{:.2e}",
            r.iteration,
            r.env_steps,
            r.mean_reward_arm,
            r.mean_reward_hand,
            r.approx_kl_arm,
            r.approx_kl_hand,
            r.lr_arm,
            r.lr_hand
        );
        if r.iteration % cfg.checkpoint_interval == 0 {
            info!(
                "it {} steps {}: reward arm {:.3} hand {:.3}, T.R. {:.1}% S.R. {:.1}%",
                r.iteration, r.env_steps, r.mean_reward_arm, r.mean_reward_hand, r.tracking_rate, r.success_rate
            );
            save_run(out, &fp, &trainer, &rows, &snaps)?;
        }
    };
    // The trainer only advances on successful iterations, so this state is
    // always consistent and can be resumed.
    save_run(out, &fp, &trainer, &rows, &snaps)?;
    result?;
    Ok(TrainSummary {
        iterations: trainer.iteration(),
        env_steps: trainer.env_steps(),
        final_row: rows.last().copied(),
    })
}

fn save_run<T: Real>(out: &Path, fp: &str, t: &Trainer<T>, rows: &[MetricsRow], snaps: &[EvalSnapshot]) -> Result<()> {
    write_stamped(&checkpoint_path(out), "trainer", fp, t)?;
    for a in t.agents() {
        write_stamped(&agent_checkpoint_path(out, a.role().name()), "agent", fp, a)?;
    }
    write_metrics_csv(&out.join(METRICS_FILE), fp, rows)?;
    write_snapshots_csv(&out.join(EVALUATIONS_FILE), fp, snaps)?;
    Ok(())
}

/// One evaluation episode as reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub tracked: bool,
    pub succeeded: bool,
    pub dropped: bool,
    pub length: usize,
    pub return_arm: f64,
    pub return_hand: f64,
    pub return_unified: f64,
}

impl<T: Real> From<&EpisodeSummary<T>> for EpisodeOutcome {
    fn from(e: &EpisodeSummary<T>) -> Self {
        Self {
            tracked: e.tracked,
            succeeded: e.succeeded,
            dropped: e.dropped,
            length: e.length,
            return_arm: e.return_arm.as_f64(),
            return_hand: e.return_hand.as_f64(),
            return_unified: e.return_unified.as_f64(),
        }
    }
}

/// Evaluation results. Rates are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub variant: Variant,
    pub policy: PolicySource,
    pub seed: u64,
    pub trials: usize,
    pub tracking_rate: f64,
    pub success_rate: f64,
    pub mean_episode_length: f64,
    pub config_fingerprint: String,
    pub episodes: Vec<EpisodeOutcome>,
}

impl EvaluationReport {
    fn new<T: Real>(cfg: &ExperimentConfig, policy: PolicySource, seed: u64, ev: &Evaluation<T>) -> Result<Self> {
        let r = Self {
            variant: cfg.variant,
            policy,
            seed,
            trials: ev.episodes.len(),
            tracking_rate: ev.tracking_rate,
            success_rate: ev.success_rate,
            mean_episode_length: ev.mean_length,
            config_fingerprint: cfg.fingerprint(),
            episodes: ev.episodes.iter().map(EpisodeOutcome::from).collect(),
        };
        r.check()?;
        Ok(r)
    }

    /// Success implies tracking in the event model, so S.R. never exceeds T.R.
    pub fn check(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("report has no trials");
        }
        if !(0.0 <= self.success_rate && self.success_rate <= self.tracking_rate && self.tracking_rate <= 100.0) {
            bail!(
                "report violates 0 <= S.R. ({}) <= T.R. ({}) <= 100",
                self.success_rate,
                self.tracking_rate
            );
        }
        Ok(())
    }
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {:>8} {:>8} {:>8} {:>10}", "variant", "trials", "T.R.%", "S.R.%", "mean len")?;
        writeln!(
            f,
            "{:<14} {:>8} {:>8.2} {:>8.2} {:>10.2}",
            self.variant.name(),
            self.trials,
            self.tracking_rate,
            self.success_rate,
            self.mean_episode_length
        )?;
        let policy = clap::ValueEnum::to_possible_value(&self.policy).map(|v| v.get_name().to_string());
        write!(
            f,
            "policy {}, episode seed {}, config {}",
            policy.unwrap_or_default(),
            self.seed,
            short(&self.config_fingerprint)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub episodes: usize,
    pub seed: u64,
    pub policy: PolicySource,
    /// Trainer checkpoint; defaults to the one under the output directory.
    pub checkpoint: Option<PathBuf>,
}

/// Runs deterministic evaluation episodes and writes the report.
pub fn cmd_evaluate(cfg: &ExperimentConfig, opts: &EvalOptions) -> Result<EvaluationReport> {
    if opts.episodes == 0 {
        bail!("--episodes must be at least 1");
    }
    let report = match cfg.precision {
        Precision::F32 => evaluate_as::<f32>(cfg, opts)?,
        Precision::F64 => evaluate_as::<f64>(cfg, opts)?,
    };
    write_stamped(&cfg.output_dir.join(REPORT_FILE), "evaluation", &report.config_fingerprint, &report)?;
    Ok(report)
}

fn evaluate_as<T: Real>(cfg: &ExperimentConfig, opts: &EvalOptions) -> Result<EvaluationReport> {
    let (env, _) = cfg.cast::<T>()?;
    let ev = with_policy::<T, _>(cfg, opts.policy, opts.checkpoint.as_deref(), opts.seed, |policy| {
        Ok(evaluate(&env, policy, opts.episodes, opts.seed)?)
    })?;
    EvaluationReport::new(cfg, opts.policy, opts.seed, &ev)
}

/// Loads trained agents, checking that they belong to this config.
pub fn load_agents<T: Real>(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<Vec<Agent<T>>> {
    let path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| checkpoint_path(&cfg.output_dir));
    let f = std::fs::File::open(&path).with_context(|| format!("opening checkpoint {}", path.display()))?;
    let s: Stamped<serde_json::Value> = pixelcatch::nn::checkpoint::read_versioned(std::io::BufReader::new(f), "trainer")
        .with_context(|| format!("reading {}", path.display()))?;
    let trained: Variant = serde_json::from_value(s.payload["env_cfg"]["variant"].clone())
        .with_context(|| format!("{} has no variant", path.display()))?;
    if trained != cfg.variant {
        bail!(
            "checkpoint {} was trained for variant {}, but the config selects {}",
            path.display(),
            trained,
            cfg.variant
        );
    }
    check_fingerprint(&s.fingerprint, &cfg.fingerprint(), &path)?;
    let t: Trainer<T> = serde_json::from_value(s.payload).with_context(|| format!("decoding {}", path.display()))?;
    check_team(t.agents(), cfg.variant)?;
    Ok(t.agents().to_vec())
}

fn with_policy<T: Real, R>(
    cfg: &ExperimentConfig,
    source: PolicySource,
    checkpoint: Option<&Path>,
    seed: u64,
    run: impl FnOnce(&mut dyn ControlPolicy<T>) -> Result<R>,
) -> Result<R> {
    match source {
        PolicySource::Trained => {
            let agents = load_agents::<T>(cfg, checkpoint)?;
            run(&mut DeterministicTeam { agents: &agents })
        }
        PolicySource::Oracle => run(&mut InterceptionOracle::default()),
        PolicySource::Random => run(&mut RandomPolicy {
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x7a4d_0000),
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutOptions {
    pub episodes: usize,
    pub seed: u64,
    pub policy: PolicySource,
    pub checkpoint: Option<PathBuf>,
    /// Directory for the trace files; defaults to `traces/` under the output.
    pub trace_dir: Option<PathBuf>,
}

/// First line of every trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub fingerprint: String,
    pub variant: Variant,
    pub policy: PolicySource,
    pub seed: u64,
    pub episode: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub traces: Vec<PathBuf>,
    pub episodes: Vec<EpisodeOutcome>,
}

/// Records full per-step traces of deterministic episodes.
pub fn cmd_rollout(cfg: &ExperimentConfig, opts: &RolloutOptions) -> Result<RolloutSummary> {
    if opts.episodes == 0 {
        bail!("--episodes must be at least 1");
    }
    let summary = match cfg.precision {
        Precision::F32 => rollout_as::<f32>(cfg, opts)?,
        Precision::F64 => rollout_as::<f64>(cfg, opts)?,
    };
    write_stamped(&cfg.output_dir.join(ROLLOUT_FILE), "rollout", &cfg.fingerprint(), &summary)?;
    Ok(summary)
}

fn rollout_as<T: Real>(cfg: &ExperimentConfig, opts: &RolloutOptions) -> Result<RolloutSummary> {
    let (env_cfg, _) = cfg.cast::<T>()?;
    let dir = opts.trace_dir.clone().unwrap_or_else(|| cfg.output_dir.join(TRACE_DIR));
    let fp = cfg.fingerprint();
    with_policy::<T, _>(cfg, opts.policy, opts.checkpoint.as_deref(), opts.seed, |policy| {
        let mut summary = RolloutSummary {
            traces: Vec::new(),
            episodes: Vec::new(),
        };
        for i in 0..opts.episodes {
            let (records, outcome) = trace_episode(&env_cfg, policy, opts.seed, i)?;
            let path = trace_path(&dir, i);
            let header = TraceHeader {
                fingerprint: fp.clone(),
                variant: cfg.variant,
                policy: opts.policy,
                seed: opts.seed,
                episode: i,
            };
            write_atomic(&path, |w| {
                serde_json::to_writer(&mut *w, &header)?;
                w.write_all(b"\n")?;
                write_trace(w, &records)?;
                Ok(())
            })?;
            summary.traces.push(path);
            summary.episodes.push(outcome);
        }
        Ok(summary)
    })
}

/// Runs episode `index` of `seed` exactly as evaluation does, capturing
/// every step.
pub fn trace_episode<T: Real>(
    cfg: &EnvConfig<T>,
    policy: &mut dyn ControlPolicy<T>,
    seed: u64,
    index: usize,
) -> Result<(Vec<TraceRecord<T>>, EpisodeOutcome)> {
    let mut env = CatchEnv::with_rng(cfg.clone(), env_rng(seed, index))?;
    let mut obs = env.reset()?;
    let mut records = vec![TraceRecord::capture(&env, None).context("no state after reset")?];
    let (mut ra, mut rh, mut ru) = (T::zero(), T::zero(), T::zero());
    loop {
        let (a, h) = policy.act(&env, &obs)?;
        let o = env.step(&a, &h)?;
        ra += o.reward_arm;
        rh += o.reward_hand;
        ru += o.reward_unified().0;
        records.push(TraceRecord::capture(&env, Some(&o)).context("no state after step")?);
        if o.done {
            break;
        }
        obs = o.observations;
    }
    let m = env.memory();
    let outcome = EpisodeOutcome::from(&EpisodeSummary {
        tracked: m.tracked(),
        succeeded: m.succeeded,
        dropped: m.dropped,
        length: m.steps,
        return_arm: ra,
        return_hand: rh,
        return_unified: ru,
    });
    Ok((records, outcome))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SysidOutput {
    pub source: PathBuf,
    pub report: SysidReport<f64>,
    /// Arm joints then hand joints; unfitted joints keep their prior scales.
    pub joint_scales: Vec<GainScales<f64>>,
}

/// Fits joint gain scales to recorded trajectories. With `patch`, also
/// writes a copy of the config carrying the fitted scales.
pub fn cmd_sysid(cfg: &ExperimentConfig, csv_path: &Path, patch: bool) -> Result<SysidOutput> {
    let f = std::fs::File::open(csv_path).with_context(|| format!("opening {}", csv_path.display()))?;
    let recorded = read_trajectories_csv::<f64, _>(f).with_context(|| format!("parsing {}", csv_path.display()))?;
    let nominal = JointChainModel::<f64>::tabletop();
    let joints: Vec<_> = nominal.arm.iter().chain(&nominal.hand).cloned().collect();
    let prior: Vec<GainScales<f64>> = if cfg.env.joint_scales.is_empty() {
        vec![GainScales::default(); ARM_DOF + HAND_DOF]
    } else {
        cfg.env.joint_scales.clone()
    };
    let init: BTreeMap<usize, GainScales<f64>> = prior.iter().copied().enumerate().collect();
    let report = sysid_fit(&joints, &recorded, &init, cfg.env.clock.physics_dt)?;
    let mut scales = prior;
    for fit in &report.fits {
        scales[fit.joint] = fit.scales;
    }
    for fit in &report.fits {
        info!(
            "joint {:2}: stiffness x{:.4} damping x{:.4} mse {:.3e} ({} samples)",
            fit.joint, fit.scales.stiffness, fit.scales.damping, fit.mse, fit.samples
        );
    }
    let out = SysidOutput {
        source: csv_path.to_path_buf(),
        report,
        joint_scales: scales,
    };
    write_stamped(&cfg.output_dir.join(SYSID_FILE), "sysid", &cfg.fingerprint(), &out)?;
    if patch {
        let mut patched = cfg.clone();
        patched.env.joint_scales = out.joint_scales.clone();
        let fp = patched.fingerprint();
        write_atomic(&cfg.output_dir.join(SYSID_CONFIG_FILE), |w| {
            write_fingerprint_line(w, &fp)?;
            w.write_all(patched.to_toml()?.as_bytes())?;
            Ok(())
        })?;
    } else if out.report.fits.len() < ARM_DOF + HAND_DOF {
        warn!("{} of {} joints had no data", ARM_DOF + HAND_DOF - out.report.fits.len(), ARM_DOF + HAND_DOF);
    }
    Ok(out)
}
