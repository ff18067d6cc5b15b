use serde::{Deserialize, Serialize};

use crate::scalar::Real;

use super::{EpisodeConfig, EventFlags};

/// World quantities the event detectors look at, measured at the end of a
/// control step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EventProbe<T: Real> {
    /// Grasp center to object center.
    pub palm_distance: T,
    /// Smallest grasp-center distance seen at any substep of the step.
    pub min_palm_distance: T,
    /// Fingertips within the capture radius of the object center.
    pub tips_within: usize,
    pub relative_speed: T,
    pub held: bool,
    /// Lowest height the object center reached during the step.
    pub object_height: T,
    /// Lowest arm joint origin or palm point.
    pub lowest_link: T,
    pub table_height: T,
}

/// What an episode has seen so far.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EpisodeMemory<T: Real> {
    pub steps: usize,
    pub approached: bool,
    /// The palm came within the capture radius at some point.
    pub contact: bool,
    pub hold_count: usize,
    pub succeeded: bool,
    pub dropped: bool,
    pub min_palm_distance: Option<T>,
}

impl<T: Real> EpisodeMemory<T> {
    /// Tracking: the palm approached the object and then reached it.
    pub fn tracked(&self) -> bool {
        self.approached && self.contact
    }
}

/// Evaluates the four binary events for one step and updates the memory.
///
/// * `app` fires once, the first time the palm comes within
///   `approach_radius`.
/// * `succ` fires once the object has been held, with at least two
///   fingertips around it and a small palm-relative speed, for `hold_steps`
///   consecutive steps.
/// * `drop` fires when a free object sinks below `drop_height`, checked at
///   every substep so that a bounce cannot hide it.
/// * `coll` fires while any arm point is below the table plane.
pub fn detect_events<T: Real>(
    probe: &EventProbe<T>,
    memory: &mut EpisodeMemory<T>,
    cfg: &EpisodeConfig<T>,
) -> EventFlags {
    let d = probe.min_palm_distance.min(probe.palm_distance);
    memory.min_palm_distance = Some(memory.min_palm_distance.map_or(d, |m| m.min(d)));

    let app = !memory.approached && d <= cfg.approach_radius;
    memory.approached |= app;
    memory.contact |= d <= cfg.capture_radius;

    let gripped = probe.held
        && probe.palm_distance <= cfg.capture_radius
        && probe.tips_within >= 2
        && probe.relative_speed < cfg.hold_speed;
    memory.hold_count = if gripped { memory.hold_count + 1 } else { 0 };
    let succ = !memory.succeeded && memory.hold_count >= cfg.hold_steps;
    memory.succeeded |= succ;

    let drop = !succ && !memory.succeeded && !probe.held && probe.object_height < cfg.drop_height;
    memory.dropped |= drop;
    let coll = probe.lowest_link < probe.table_height;
    EventFlags { succ, drop, app, coll }
}
