//! Two-step stacked observations for the arm policy, the hand policy and
//! the centralized critics, with the visual-input ablations.
//!
//! Per-step layouts (older step first, newer step second):
//!
//! ```text
//! arm    [visual(6) pose_eef(7) q_arm(6)  a_arm(6)]                   25
//! hand   [visual(6) pose_eef(7) q_hand(13) a_hand(13)]                39
//! critic [arm(25) hand(39) p_object(3)]                               67
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Real;
use crate::sim::{ARM_DOF, HAND_DOF};
use crate::vision::PixelFeatures;

pub const VISUAL_DIM: usize = 6;
pub const POSE_DIM: usize = 7;
pub const ARM_STEP_DIM: usize = VISUAL_DIM + POSE_DIM + 2 * ARM_DOF;
pub const HAND_STEP_DIM: usize = VISUAL_DIM + POSE_DIM + 2 * HAND_DOF;
pub const CRITIC_STEP_DIM: usize = ARM_STEP_DIM + HAND_STEP_DIM + 3;
pub const HISTORY: usize = 2;
pub const ARM_OBS_DIM: usize = HISTORY * ARM_STEP_DIM;
pub const HAND_OBS_DIM: usize = HISTORY * HAND_STEP_DIM;
pub const CRITIC_OBS_DIM: usize = HISTORY * CRITIC_STEP_DIM;
pub const UNIFIED_OBS_DIM: usize = ARM_OBS_DIM + HAND_OBS_DIM;
pub const UNIFIED_ACTION_DIM: usize = ARM_DOF + HAND_DOF;

/// Experiment variant: the full method, its visual ablations, and the
/// single-agent baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Proposed,
    /// Initial object position instead of pixel features.
    WoPf,
    /// Box center and its motion only.
    OnlyCenter,
    /// Box width and height and their change only.
    OnlyWh,
    /// One agent drives all 19 joints from the concatenated observations.
    SaRl,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Proposed,
        Variant::WoPf,
        Variant::OnlyCenter,
        Variant::OnlyWh,
        Variant::SaRl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Proposed => "proposed",
            Variant::WoPf => "wo-pf",
            Variant::OnlyCenter => "only-center",
            Variant::OnlyWh => "only-wh",
            Variant::SaRl => "sa-rl",
        }
    }

    pub fn is_single_agent(self) -> bool {
        self == Variant::SaRl
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}' (expected one of proposed, wo-pf, only-center, only-wh, sa-rl)")))
    }
}

/// Everything observed (or privileged) at one control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Frame<T: Real> {
    pub features: PixelFeatures<T>,
    /// Box width and height, scaled like the features.
    pub box_size: (T, T),
    pub pose_eef: [T; POSE_DIM],
    pub q_arm: [T; ARM_DOF],
    pub a_arm: [T; ARM_DOF],
    pub q_hand: [T; HAND_DOF],
    pub a_hand: [T; HAND_DOF],
    pub p_object: Vec3<T>,
    /// Where the object was launched from; only the `wo-pf` variant uses it.
    pub initial_object: Vec3<T>,
}

/// The six visual slots of a frame under a variant's masking.
pub fn visual_slots<T: Real>(frame: &Frame<T>, variant: Variant) -> [T; VISUAL_DIM] {
    let z = T::zero();
    let f = &frame.features;
    match variant {
        Variant::Proposed | Variant::SaRl => f.to_array(),
        Variant::OnlyCenter => [f.cx, f.cy, f.dcx, f.dcy, z, z],
        Variant::OnlyWh => [frame.box_size.0, frame.box_size.1, z, z, f.dw, f.dh],
        Variant::WoPf => {
            let p = frame.initial_object;
            [p.x, p.y, p.z, z, z, z]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Observations<T: Real> {
    pub arm: Vec<T>,
    pub hand: Vec<T>,
    pub critic: Vec<T>,
}

impl<T: Real> Observations<T> {
    /// Arm then hand observation, the single-agent policy input.
    pub fn unified(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(UNIFIED_OBS_DIM);
        v.extend_from_slice(&self.arm);
        v.extend_from_slice(&self.hand);
        v
    }
}

fn push_arm_step<T: Real>(out: &mut Vec<T>, f: &Frame<T>, visual: &[T; VISUAL_DIM]) {
    out.extend_from_slice(visual);
    out.extend_from_slice(&f.pose_eef);
    out.extend_from_slice(&f.q_arm);
    out.extend_from_slice(&f.a_arm);
}

fn push_hand_step<T: Real>(out: &mut Vec<T>, f: &Frame<T>, visual: &[T; VISUAL_DIM]) {
    out.extend_from_slice(visual);
    out.extend_from_slice(&f.pose_eef);
    out.extend_from_slice(&f.q_hand);
    out.extend_from_slice(&f.a_hand);
}

/// Concatenates the two most recent frames, older first.
pub fn assemble_observations<T: Real>(history: &[Frame<T>; HISTORY], variant: Variant) -> Observations<T> {
    let mut arm = Vec::with_capacity(ARM_OBS_DIM);
    let mut hand = Vec::with_capacity(HAND_OBS_DIM);
    let mut critic = Vec::with_capacity(CRITIC_OBS_DIM);
    for f in history {
        let visual = visual_slots(f, variant);
        push_arm_step(&mut arm, f, &visual);
        push_hand_step(&mut hand, f, &visual);
        push_arm_step(&mut critic, f, &visual);
        push_hand_step(&mut critic, f, &visual);
        critic.extend_from_slice(&f.p_object.to_array());
    }
    Observations { arm, hand, critic }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(seed: f64) -> Frame<f64> {
        let mut k = seed;
        let mut next = || {
            k += 0.137;
            k.sin()
        };
        Frame {
            features: PixelFeatures {
                cx: next(),
                cy: next(),
                dcx: next(),
                dcy: next(),
                dw: next(),
                dh: next(),
            },
            box_size: (next(), next()),
            pose_eef: std::array::from_fn(|_| next()),
            q_arm: std::array::from_fn(|_| next()),
            a_arm: std::array::from_fn(|_| next()),
            q_hand: std::array::from_fn(|_| next()),
            a_hand: std::array::from_fn(|_| next()),
            p_object: Vec3::new(next(), next(), next()),
            initial_object: Vec3::new(2.5, 0.1, 1.2),
        }
    }

    #[test]
    fn dimensions() {
        assert_eq!((ARM_OBS_DIM, HAND_OBS_DIM, CRITIC_OBS_DIM), (50, 78, 134));
        assert_eq!((UNIFIED_OBS_DIM, UNIFIED_ACTION_DIM), (128, 19));
        for v in Variant::ALL {
            let o = assemble_observations(&[frame(0.0), frame(1.0)], v);
            assert_eq!((o.arm.len(), o.hand.len(), o.critic.len()), (50, 78, 134));
        }
    }

    #[test]
    fn older_frame_first() {
        let h = [frame(0.0), frame(1.0)];
        let o = assemble_observations(&h, Variant::Proposed);
        assert_eq!(o.arm[0], h[0].features.cx);
        assert_eq!(o.arm[ARM_STEP_DIM], h[1].features.cx);
        assert_eq!(&o.critic[CRITIC_STEP_DIM - 3..CRITIC_STEP_DIM], &h[0].p_object.to_array());
        assert_eq!(&o.critic[CRITIC_OBS_DIM - 3..], &h[1].p_object.to_array());
    }

    #[test]
    fn masks() {
        let h = [frame(0.0), frame(1.0)];
        let c = assemble_observations(&h, Variant::OnlyCenter);
        for step in 0..2 {
            let base = step * ARM_STEP_DIM;
            assert_eq!(c.arm[base + 4], 0.0);
            assert_eq!(c.arm[base + 5], 0.0);
            assert_eq!(c.arm[base], h[step].features.cx);
        }
        let w = assemble_observations(&h, Variant::OnlyWh);
        assert_eq!(w.arm[0], h[0].box_size.0);
        assert_eq!(&w.arm[2..4], &[0.0, 0.0]);
        assert_eq!(w.arm[4], h[0].features.dw);
        let p = assemble_observations(&h, Variant::WoPf);
        assert_eq!(&p.arm[0..6], &[2.5, 0.1, 1.2, 0.0, 0.0, 0.0]);
        assert_eq!(&p.arm[ARM_STEP_DIM..ARM_STEP_DIM + 6], &p.arm[0..6]);
    }

    #[test]
    fn object_position_only_reaches_the_critic() {
        let h = [frame(0.0), frame(1.0)];
        let mut moved = h.clone();
        for f in &mut moved {
            f.p_object += Vec3::new(1.0, -2.0, 3.0);
        }
        for v in Variant::ALL {
            let a = assemble_observations(&h, v);
            let b = assemble_observations(&moved, v);
            assert_eq!(a.arm, b.arm);
            assert_eq!(a.hand, b.hand);
            assert_ne!(a.critic, b.critic);
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("full".parse::<Variant>().is_err());
    }
}
