//! Role-specific rewards for the arm and hand agents.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::scalar::{sq_norm, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", default)]
pub struct RewardConfig<T: Real> {
    pub success: T,
    pub failure: T,
    pub approach: T,
    pub action: T,
    pub time: T,
}

impl<T: Real> Default for RewardConfig<T> {
    fn default() -> Self {
        Self {
            success: T::of(10.0),
            failure: T::of(5.0),
            approach: T::of(0.1),
            action: T::of(0.01),
            time: T::of(-0.01),
        }
    }
}

/// Binary events of one control step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventFlags {
    pub succ: bool,
    pub drop: bool,
    pub app: bool,
    pub coll: bool,
}

#[inline]
fn indicator<T: Real>(b: bool) -> T {
    if b {
        T::one()
    } else {
        T::zero()
    }
}

/// Itemized reward. `total` is the left-to-right sum of the terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RewardBreakdown<T: Real> {
    pub time: T,
    pub distance: T,
    pub success: T,
    pub approach: T,
    pub failure: T,
    pub action: T,
    pub total: T,
}

impl<T: Real> RewardBreakdown<T> {
    pub fn sum_terms(&self) -> T {
        self.time + self.distance + self.success + self.approach + self.failure + self.action
    }

    fn finish(mut self) -> Self {
        self.total = self.sum_terms();
        self
    }
}

/// Change in link-to-object distance over one step; positive when closing in.
pub fn compute_r_dist<T: Real>(
    prev_link: Vec3<T>,
    prev_obj: Vec3<T>,
    link: Vec3<T>,
    obj: Vec3<T>,
) -> T {
    prev_link.distance(prev_obj) - link.distance(obj)
}

/// Arm reward: time cost, palm progress, success and one-shot approach
/// bonuses, drop/collision penalty and an action-magnitude penalty.
pub fn arm_reward<T: Real>(
    r_dist_palm: T,
    flags: &EventFlags,
    a_arm: &[T],
    cfg: &RewardConfig<T>,
) -> (T, RewardBreakdown<T>) {
    let b = RewardBreakdown {
        time: cfg.time,
        distance: r_dist_palm,
        success: cfg.success * indicator(flags.succ),
        approach: cfg.approach * indicator(flags.app),
        failure: -cfg.failure * (indicator::<T>(flags.drop) + indicator(flags.coll)),
        action: -cfg.action * sq_norm(a_arm),
        total: T::zero(),
    }
    .finish();
    (b.total, b)
}

/// Hand reward: mean progress of palm and fingertips toward the object,
/// success bonus, drop/collision penalty and an action penalty. There is
/// no time term.
pub fn hand_reward<T: Real>(
    r_dist_palm: T,
    r_dist_fingers: &[T; 4],
    flags: &EventFlags,
    a_hand: &[T],
    cfg: &RewardConfig<T>,
) -> (T, RewardBreakdown<T>) {
    let links = r_dist_palm + r_dist_fingers.iter().copied().sum::<T>();
    let b = RewardBreakdown {
        time: T::zero(),
        distance: links / T::of(5.0),
        success: cfg.success * indicator(flags.succ),
        approach: T::zero(),
        failure: -cfg.failure * (indicator::<T>(flags.drop) + indicator(flags.coll)),
        action: -cfg.action * sq_norm(a_hand),
        total: T::zero(),
    }
    .finish();
    (b.total, b)
}

/// Single-agent reward: arm and hand terms added, with the shared success
/// bonus and failure penalty counted once.
pub fn unified_reward<T: Real>(
    arm: &RewardBreakdown<T>,
    hand: &RewardBreakdown<T>,
) -> (T, RewardBreakdown<T>) {
    let b = RewardBreakdown {
        time: arm.time + hand.time,
        distance: arm.distance + hand.distance,
        success: arm.success,
        approach: arm.approach + hand.approach,
        failure: arm.failure,
        action: arm.action + hand.action,
        total: T::zero(),
    }
    .finish();
    (b.total, b)
}
