use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pixelcatch::env::Variant;
use pixelcatch_cli::artifact::CONFIG_FILE;
use pixelcatch_cli::{
    cmd_evaluate, cmd_rollout, cmd_sysid, cmd_train, EvalOptions, ExperimentConfig, PolicySource, RolloutOptions,
    TrainOptions,
};

/// Robot catching from pixel-level bounding-box features.
///
/// Log verbosity follows PIXELCATCH_LOG (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "pixelcatch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Defaults to <out>/config.toml when that exists.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Set a config key, e.g. trainer.gamma=0.5. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Training seed, the same as --override seed=N.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides output_dir in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// proposed, wo-pf, only-center, only-wh or sa-rl.
    #[arg(long)]
    variant: Option<Variant>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the agents of the configured variant.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a policy and write evaluation.json.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 300)]
        episodes: usize,
        #[arg(long, value_enum, default_value_t = PolicySource::Trained)]
        policy: PolicySource,
        /// Trainer checkpoint; defaults to <out>/checkpoints/trainer.json.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Seed for the evaluation throws; defaults to the config seed.
        #[arg(long)]
        episode_seed: Option<u64>,
    },
    /// Record per-step JSON-lines traces.
    Rollout {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long, value_enum, default_value_t = PolicySource::Trained)]
        policy: PolicySource,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Trace directory; defaults to <out>/traces.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        episode_seed: Option<u64>,
    },
    /// Fit joint gain scales to recorded trajectories.
    Sysid {
        #[command(flatten)]
        common: Common,
        /// CSV with columns t,joint,target,measured.
        #[arg(long)]
        csv: PathBuf,
        /// Also write config.sysid.toml carrying the fitted scales.
        #[arg(long)]
        patch: bool,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut overrides = c.overrides.clone();
    if let Some(s) = c.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(v) = c.variant {
        overrides.push(format!("variant=\"{v}\""));
    }
    let path = match (&c.config, &c.out) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(out)) if out.join(CONFIG_FILE).exists() => Some(out.join(CONFIG_FILE)),
        _ => None,
    };
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(&p, &overrides)?,
        None => ExperimentConfig::from_toml_str("", &overrides).context("no --config given")?,
    };
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, resume } => {
            let cfg = load_config(&common)?;
            let s = cmd_train(&cfg, &TrainOptions { resume })?;
            println!(
                "trained {} for {} iterations ({} env steps); artifacts in {}",
                cfg.variant,
                s.iterations,
                s.env_steps,
                cfg.output_dir.display()
            );
        }
        Command::Evaluate {
            common,
            episodes,
            policy,
            checkpoint,
            episode_seed,
        } => {
            let cfg = load_config(&common)?;
            let report = cmd_evaluate(
                &cfg,
                &EvalOptions {
                    episodes,
                    seed: episode_seed.unwrap_or(cfg.seed),
                    policy,
                    checkpoint,
                },
            )?;
            println!("{report}");
        }
        Command::Rollout {
            common,
            episodes,
            policy,
            checkpoint,
            trace,
            episode_seed,
        } => {
            let cfg = load_config(&common)?;
            let s = cmd_rollout(
                &cfg,
                &RolloutOptions {
                    episodes,
                    seed: episode_seed.unwrap_or(cfg.seed),
                    policy,
                    checkpoint,
                    trace_dir: trace,
                },
            )?;
            for p in &s.traces {
                println!("{}", p.display());
            }
        }
        Command::Sysid { common, csv, patch } => {
            let cfg = load_config(&common)?;
            let out = cmd_sysid(&cfg, &csv, patch)?;
            for f in &out.report.fits {
                println!(
                    "joint {:2}  stiffness x{:.4}  damping x{:.4}  mse {:.3e}",
                    f.joint, f.scales.stiffness, f.scales.damping, f.mse
                );
            }
            println!("residual {:.6e}", out.report.residual);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PIXELCATCH_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
