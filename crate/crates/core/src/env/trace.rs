//! Per-step episode traces, one JSON object per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{Quat, Vec3};
use crate::scalar::Real;

use super::{CatchEnv, EventFlags, RewardBreakdown, StepOutcome, VisualInfo};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TraceRecord<T: Real> {
    pub step: usize,
    pub time: T,
    pub q_arm: Vec<T>,
    pub q_hand: Vec<T>,
    pub object_position: Vec3<T>,
    pub object_orientation: Quat<T>,
    pub object_velocity: Vec3<T>,
    pub held: bool,
    pub visual: VisualInfo<T>,
    /// Absent on the reset record.
    pub a_arm: Option<Vec<T>>,
    pub a_hand: Option<Vec<T>>,
    pub reward_arm: Option<RewardBreakdown<T>>,
    pub reward_hand: Option<RewardBreakdown<T>>,
    pub flags: Option<EventFlags>,
    pub done: bool,
}

impl<T: Real> TraceRecord<T> {
    /// Snapshot of an environment, plus the step outcome that led to it.
    pub fn capture(env: &CatchEnv<T>, outcome: Option<&StepOutcome<T>>) -> Option<Self> {
        let w = env.world()?;
        Some(Self {
            step: w.step,
            time: w.time(&env.config().clock),
            q_arm: w.arm.positions.clone(),
            q_hand: w.hand.positions.clone(),
            object_position: w.object.position,
            object_orientation: w.object.orientation,
            object_velocity: w.object.linear_velocity,
            held: w.held.is_some(),
            visual: *env.last_visual()?,
            a_arm: outcome.map(|o| o.a_arm.to_vec()),
            a_hand: outcome.map(|o| o.a_hand.to_vec()),
            reward_arm: outcome.map(|o| o.breakdown_arm),
            reward_hand: outcome.map(|o| o.breakdown_hand),
            flags: outcome.map(|o| o.flags),
            done: outcome.is_some_and(|o| o.done),
        })
    }
}

pub fn write_trace<T: Real, W: Write>(mut w: W, records: &[TraceRecord<T>]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<T: Real, R: BufRead>(r: R) -> Result<Vec<TraceRecord<T>>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
