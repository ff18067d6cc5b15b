use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use pixelcatch::env::{EnvConfig, Variant};
use pixelcatch::marl::TrainerConfig;
use pixelcatch::Real;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Scalar type used for simulation and networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// One experiment. Only `variant` is required; everything else defaults to
/// the desk-scale settings. The top-level `seed`, `num_envs` and
/// `total_steps` take precedence over the copies inside `trainer`, and
/// `variant` over `env.variant`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub variant: Variant,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_num_envs")]
    pub num_envs: usize,
    #[serde(default = "default_total_steps")]
    pub total_steps: usize,
    #[serde(default)]
    pub precision: Precision,
    /// Iterations between checkpoint and metrics flushes.
    #[serde(default = "default_checkpoint_interval")]
    pub checkpoint_interval: usize,
    /// Where artifacts go; not part of the fingerprint.
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub env: EnvConfig<f64>,
    #[serde(default)]
    pub trainer: TrainerConfig<f64>,
}

fn default_num_envs() -> usize {
    32
}

fn default_total_steps() -> usize {
    2_000_000
}

fn default_checkpoint_interval() -> usize {
    100
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

impl ExperimentConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            seed: 0,
            num_envs: default_num_envs(),
            total_steps: default_total_steps(),
            precision: Precision::default(),
            checkpoint_interval: default_checkpoint_interval(),
            output_dir: default_output_dir(),
            env: EnvConfig::default(),
            trainer: TrainerConfig::default(),
        }
        .resolved()
    }

    /// Parses TOML text, applies `KEY=VALUE` overrides, and resolves the
    /// top-level fields into the module configs. Unknown keys are errors.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let cfg: Self = toml::Value::Table(table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| anyhow!("invalid config: {}", e.message()))?;
        let cfg = cfg.resolved();
        let known = toml::Value::try_from(&cfg).context("serializing resolved config")?;
        let mut unknown = Vec::new();
        unknown_keys(&toml::Value::Table(table), &known, "", &mut unknown);
        // The output directory is accepted but never serialized.
        unknown.retain(|k| k != "output_dir");
        if !unknown.is_empty() {
            bail!("unknown config key(s): {}", unknown.join(", "));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_str(&text, overrides).with_context(|| format!("in {}", path.display()))
    }

    /// Copies the top-level fields into the module configs.
    pub fn resolved(mut self) -> Self {
        self.env.variant = self.variant;
        self.trainer.seed = self.seed;
        self.trainer.num_envs = self.num_envs;
        self.trainer.total_steps = self.total_steps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.trainer.validate()?;
        if self.checkpoint_interval == 0 {
            bail!("checkpoint_interval must be at least 1");
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the resolved config.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(&self.clone().resolved()).expect("config serializes");
        format!("{:x}", Sha256::digest(&json))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Environment and trainer configs at scalar type `T`.
    pub fn cast<T: Real>(&self) -> Result<(EnvConfig<T>, TrainerConfig<T>)> {
        let env = serde_json::from_value(serde_json::to_value(&self.env)?)?;
        let trainer = serde_json::from_value(serde_json::to_value(&self.trainer)?)?;
        Ok((env, trainer))
    }
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

pub fn apply_override(table: &mut toml::Table, ov: &str) -> Result<()> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| anyhow!("override '{ov}' is not KEY=VALUE"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key '{key}' is malformed");
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override '{key}': '{p}' is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

fn unknown_keys(given: &toml::Value, known: &toml::Value, prefix: &str, out: &mut Vec<String>) {
    let (toml::Value::Table(g), toml::Value::Table(k)) = (given, known) else {
        return;
    };
    for (key, value) in g {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match k.get(key) {
            Some(kv) => unknown_keys(value, kv, &path, out),
            None => out.push(path),
        }
    }
}
