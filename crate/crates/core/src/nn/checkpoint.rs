use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON envelope naming what is inside and which layout version wrote it.
/// Floats are written in shortest round-trip form, so reading back is
/// bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<P> {
    pub kind: String,
    pub version: u32,
    pub payload: P,
}

pub fn write_versioned<P: Serialize, W: Write>(w: W, kind: &str, payload: &P) -> Result<()> {
    let env = Envelope {
        kind: kind.to_string(),
        version: CHECKPOINT_VERSION,
        payload,
    };
    serde_json::to_writer(w, &env)?;
    Ok(())
}

pub fn read_versioned<P: DeserializeOwned, R: Read>(r: R, kind: &str) -> Result<P> {
    let env: Envelope<P> = serde_json::from_reader(r)?;
    if env.kind != kind {
        return Err(Error::Checkpoint(format!("expected a '{kind}' file, found '{}'", env.kind)));
    }
    if env.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {} (this build reads {CHECKPOINT_VERSION})",
            env.version
        )));
    }
    Ok(env.payload)
}
