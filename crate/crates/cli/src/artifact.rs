//! Output files. Every artifact carries the fingerprint of the config that
//! produced it, and every write goes through a temporary file that is
//! renamed into place.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pixelcatch::marl::{metrics_record, EvalSnapshot, MetricsRow, METRICS_HEADER};
use pixelcatch::nn::checkpoint::{read_versioned, write_versioned};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EVALUATIONS_FILE: &str = "evaluations.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const TRAINER_CHECKPOINT: &str = "trainer.json";
pub const REPORT_FILE: &str = "evaluation.json";
pub const ROLLOUT_FILE: &str = "rollout.json";
pub const TRACE_DIR: &str = "traces";
pub const SYSID_FILE: &str = "sysid.json";
pub const SYSID_CONFIG_FILE: &str = "config.sysid.toml";

const FINGERPRINT_PREFIX: &str = "# fingerprint: ";

/// Writes `path` by filling a sibling temporary file and renaming it.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// A payload tagged with its config fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stamped<P> {
    pub fingerprint: String,
    pub payload: P,
}

pub fn check_fingerprint(found: &str, expected: &str, what: &Path) -> Result<()> {
    if found != expected {
        bail!(
            "{} was produced by a different config (fingerprint {} != {})",
            what.display(),
            short(found),
            short(expected)
        );
    }
    Ok(())
}

pub fn short(fp: &str) -> &str {
    &fp[..fp.len().min(12)]
}

/// Versioned JSON file holding a stamped payload.
pub fn write_stamped<P: Serialize>(path: &Path, kind: &str, fingerprint: &str, payload: &P) -> Result<()> {
    let stamped = Stamped {
        fingerprint: fingerprint.to_string(),
        payload,
    };
    write_atomic(path, |w| Ok(write_versioned(w, kind, &stamped)?))
}

/// Reads a stamped file, rejecting it unless the fingerprint matches.
pub fn read_stamped<P: DeserializeOwned>(path: &Path, kind: &str, fingerprint: &str) -> Result<P> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let s: Stamped<P> =
        read_versioned(BufReader::new(f), kind).with_context(|| format!("reading {}", path.display()))?;
    check_fingerprint(&s.fingerprint, fingerprint, path)?;
    Ok(s.payload)
}

pub fn write_fingerprint_line(w: &mut dyn Write, fingerprint: &str) -> Result<()> {
    writeln!(w, "{FINGERPRINT_PREFIX}{fingerprint}")?;
    Ok(())
}

/// The fingerprint comment on the first line of a text artifact.
pub fn read_fingerprint_line(path: &Path) -> Result<String> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut line = String::new();
    BufReader::new(f).read_line(&mut line)?;
    match line.trim_end().strip_prefix(FINGERPRINT_PREFIX) {
        Some(fp) => Ok(fp.to_string()),
        None => bail!("{} has no fingerprint line", path.display()),
    }
}

pub fn write_metrics_csv(path: &Path, fingerprint: &str, rows: &[MetricsRow]) -> Result<()> {
    write_atomic(path, |w| {
        write_fingerprint_line(w, fingerprint)?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(METRICS_HEADER)?;
        for r in rows {
            wr.write_record(metrics_record(r))?;
        }
        wr.flush()?;
        Ok(())
    })
}

pub fn read_metrics_csv(path: &Path, fingerprint: &str) -> Result<Vec<MetricsRow>> {
    check_fingerprint(&read_fingerprint_line(path)?, fingerprint, path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, r) in rdr.deserialize().enumerate() {
        rows.push(r.with_context(|| format!("{} row {}", path.display(), i + 2))?);
    }
    Ok(rows)
}

pub fn write_snapshots_csv(path: &Path, fingerprint: &str, snaps: &[EvalSnapshot]) -> Result<()> {
    write_atomic(path, |w| {
        write_fingerprint_line(w, fingerprint)?;
        let mut wr = csv::Writer::from_writer(w);
        for s in snaps {
            wr.serialize(s)?;
        }
        if snaps.is_empty() {
            wr.write_record(["iteration", "env_steps", "tracking_rate", "success_rate", "mean_length"])?;
        }
        wr.flush()?;
        Ok(())
    })
}

pub fn read_snapshots_csv(path: &Path, fingerprint: &str) -> Result<Vec<EvalSnapshot>> {
    check_fingerprint(&read_fingerprint_line(path)?, fingerprint, path)?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut out = Vec::new();
    for r in rdr.deserialize() {
        out.push(r?);
    }
    Ok(out)
}

pub fn checkpoint_path(out: &Path) -> PathBuf {
    out.join(CHECKPOINT_DIR).join(TRAINER_CHECKPOINT)
}

pub fn agent_checkpoint_path(out: &Path, role: &str) -> PathBuf {
    out.join(CHECKPOINT_DIR).join(format!("agent-{role}.json"))
}

pub fn trace_path(dir: &Path, episode: usize) -> PathBuf {
    dir.join(format!("episode-{episode:04}.jsonl"))
}
