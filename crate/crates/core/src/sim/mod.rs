//! Deterministic 120 Hz physics: PD-tracked joint chains, a ballistic box
//! object, throw sampling, per-episode domain randomization and gain
//! identification from recorded trajectories.

mod dynamics;
mod kinematics;
mod randomization;
pub mod sysid;

pub use dynamics::{step_joints, step_object, GRAVITY};
pub use kinematics::{fingertip_positions, forward_kinematics, ArmFrames};
pub use randomization::{
    closest_approach, randomize_episode, sample_throw, EpisodeParams, RandomizationConfig,
    ThrowConfig, UniformRange,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Quat, Vec3};
use crate::scalar::Real;

pub const ARM_DOF: usize = 6;
pub const HAND_DOF: usize = 13;
pub const FINGER_COUNT: usize = 4;
pub const FINGER_NAMES: [&str; FINGER_COUNT] = ["thumb", "index", "middle", "ring"];

/// Height of the table top the arm is mounted on.
pub const TABLE_HEIGHT: f64 = 0.81;

/// Positions and velocities of one joint group (arm or hand).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct JointState<T: Real> {
    pub positions: Vec<T>,
    pub velocities: Vec<T>,
}

impl<T: Real> JointState<T> {
    pub fn at_rest(positions: Vec<T>) -> Self {
        let velocities = vec![T::zero(); positions.len()];
        Self {
            positions,
            velocities,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// One revolute joint: the fixed transform from the parent frame, then a
/// rotation about `axis`, plus its PD gains and position limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct JointSpec<T: Real> {
    pub axis: Vec3<T>,
    pub offset: Pose<T>,
    pub limit_lo: T,
    pub limit_hi: T,
    pub stiffness: T,
    pub damping: T,
}

impl<T: Real> JointSpec<T> {
    fn revolute(offset: [f64; 3], axis: [f64; 3], limits: (f64, f64), gains: (f64, f64)) -> Self {
        Self {
            axis: Vec3::from_f64(axis),
            offset: Pose::from_translation(Vec3::from_f64(offset)),
            limit_lo: T::of(limits.0),
            limit_hi: T::of(limits.1),
            stiffness: T::of(gains.0),
            damping: T::of(gains.1),
        }
    }

    #[inline]
    pub fn clamp(&self, q: T) -> T {
        q.max(self.limit_lo).min(self.limit_hi)
    }
}

/// A finger: a short chain rooted in the palm frame. `joints` indexes into
/// [`JointChainModel::hand`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FingerChain<T: Real> {
    pub root: Pose<T>,
    pub first_joint: usize,
    pub joint_count: usize,
    pub tip: Vec3<T>,
}

/// Arm and hand geometry with per-joint gains.
///
/// Frame convention: world z up, the robot faces +x. At the zero
/// configuration every arm link points straight up. The palm frame has its
/// fingers along local +z and its catching face along local +x; finger
/// flexion rotates about local +y, curling the fingertips toward +x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct JointChainModel<T: Real> {
    pub base: Pose<T>,
    pub arm: Vec<JointSpec<T>>,
    pub palm_offset: Pose<T>,
    pub hand: Vec<JointSpec<T>>,
    pub fingers: Vec<FingerChain<T>>,
    /// Nominal ready posture the arm starts each episode from.
    pub arm_home: Vec<T>,
}

const ARM_GAINS: (f64, f64) = (400.0, 40.0);
const FINGER_GAINS: (f64, f64) = (300.0, 30.0);
const FLEX_LIMITS: (f64, f64) = (0.0, 1.2);

impl<T: Real> Default for JointChainModel<T> {
    fn default() -> Self {
        Self::tabletop()
    }
}

impl<T: Real> JointChainModel<T> {
    /// Generic 6-DoF tabletop arm with a four-finger, 13-joint hand.
    ///
    /// Link lengths (m): shoulder 0.12, upper arm 0.40, forearm 0.36, wrist
    /// 0.08 + 0.06, palm 0.08. The base sits on the table at 0.81 m. With
    /// `arm_home = [0, 0.9, 0.9, -1.8, 0, 0]` the palm is upright at roughly
    /// (0.66, 0, 1.32) with its face toward +x.
    pub fn tabletop() -> Self {
        let arm = vec![
            JointSpec::revolute([0.0, 0.0, 0.0], [0.0, 0.0, 1.0], (-2.0, 2.0), ARM_GAINS),
            JointSpec::revolute([0.0, 0.0, 0.12], [0.0, 1.0, 0.0], (-1.0, 2.0), ARM_GAINS),
            JointSpec::revolute([0.0, 0.0, 0.40], [0.0, 1.0, 0.0], (-0.5, 2.6), ARM_GAINS),
            JointSpec::revolute([0.0, 0.0, 0.36], [0.0, 1.0, 0.0], (-2.6, 1.0), ARM_GAINS),
            JointSpec::revolute([0.0, 0.0, 0.08], [0.0, 0.0, 1.0], (-2.0, 2.0), ARM_GAINS),
            JointSpec::revolute([0.0, 0.0, 0.06], [1.0, 0.0, 0.0], (-1.5, 1.5), ARM_GAINS),
        ];
        let y = [0.0, 1.0, 0.0];
        let flex = |offset: [f64; 3]| JointSpec::revolute(offset, y, FLEX_LIMITS, FINGER_GAINS);
        let mut hand = Vec::with_capacity(HAND_DOF);
        let mut fingers = Vec::with_capacity(FINGER_COUNT);
        // Thumb: opposition twist about its own axis, then three flexion joints.
        fingers.push(FingerChain {
            root: Pose::from_translation(Vec3::from_f64([0.0, -0.045, 0.0])),
            first_joint: hand.len(),
            joint_count: 4,
            tip: Vec3::from_f64([0.0, 0.0, 0.03]),
        });
        hand.push(JointSpec::revolute([0.0; 3], [0.0, 0.0, 1.0], (-0.5, 0.5), FINGER_GAINS));
        hand.push(flex([0.0; 3]));
        hand.push(flex([0.0, 0.0, 0.04]));
        hand.push(flex([0.0, 0.0, 0.035]));
        for lateral in [-0.025, 0.0, 0.025] {
            fingers.push(FingerChain {
                root: Pose::from_translation(Vec3::from_f64([0.0, lateral, 0.05])),
                first_joint: hand.len(),
                joint_count: 3,
                tip: Vec3::from_f64([0.0, 0.0, 0.03]),
            });
            hand.push(flex([0.0; 3]));
            hand.push(flex([0.0, 0.0, 0.045]));
            hand.push(flex([0.0, 0.0, 0.035]));
        }
        Self {
            base: Pose::from_translation(Vec3::from_f64([0.0, 0.0, TABLE_HEIGHT])),
            arm,
            palm_offset: Pose::from_translation(Vec3::from_f64([0.0, 0.0, 0.08])),
            hand,
            fingers,
            arm_home: [0.0, 0.9, 0.9, -1.8, 0.0, 0.0].iter().map(|&v| T::of(v)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::error::check_len("arm joints", ARM_DOF, self.arm.len())?;
        crate::error::check_len("hand joints", HAND_DOF, self.hand.len())?;
        crate::error::check_len("fingers", FINGER_COUNT, self.fingers.len())?;
        crate::error::check_len("arm home", ARM_DOF, self.arm_home.len())?;
        for (i, j) in self.arm.iter().chain(&self.hand).enumerate() {
            if !(j.limit_lo < j.limit_hi) {
                return Err(Error::Config(format!("joint {i}: limit_lo must be below limit_hi")));
            }
            if !(j.stiffness > T::zero()) || !(j.damping >= T::zero()) {
                return Err(Error::Config(format!(
                    "joint {i}: stiffness must be positive and damping non-negative"
                )));
            }
        }
        let mut next = 0;
        for f in &self.fingers {
            if f.first_joint != next || f.joint_count == 0 {
                return Err(Error::Config("finger joint ranges must tile the hand".into()));
            }
            next += f.joint_count;
        }
        if next != HAND_DOF {
            return Err(Error::Config("finger joint ranges must cover all hand joints".into()));
        }
        Ok(())
    }

    pub fn hand_lower(&self) -> Vec<T> {
        self.hand.iter().map(|j| j.limit_lo).collect()
    }

    pub fn hand_upper(&self) -> Vec<T> {
        self.hand.iter().map(|j| j.limit_hi).collect()
    }
}

/// Rigid box proxy for the thrown object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ObjectState<T: Real> {
    pub position: Vec3<T>,
    pub orientation: Quat<T>,
    pub linear_velocity: Vec3<T>,
    pub angular_velocity: Vec3<T>,
    pub mass: T,
    pub restitution: T,
    pub half_extents: Vec3<T>,
}

impl<T: Real> ObjectState<T> {
    pub fn validate(&self) -> Result<()> {
        let qn = self.orientation.norm().as_f64();
        if (qn - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!("object quaternion norm {qn}")));
        }
        if !(self.mass > T::zero()) {
            return Err(Error::Contract("object mass must be positive".into()));
        }
        if !(self.restitution >= T::zero() && self.restitution <= T::one()) {
            return Err(Error::Contract("restitution outside [0, 1]".into()));
        }
        let h = self.half_extents;
        if !(h.x > T::zero() && h.y > T::zero() && h.z > T::zero()) {
            return Err(Error::Contract("half extents must be positive".into()));
        }
        Ok(())
    }

    /// The eight box corners in world coordinates.
    pub fn corners(&self) -> [Vec3<T>; 8] {
        let h = self.half_extents;
        let mut out = [Vec3::zero(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let sx = if i & 1 == 0 { -h.x } else { h.x };
            let sy = if i & 2 == 0 { -h.y } else { h.y };
            let sz = if i & 4 == 0 { -h.z } else { h.z };
            *c = self.position + self.orientation.rotate(Vec3::new(sx, sy, sz));
        }
        out
    }
}

/// Physics and control rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", default)]
pub struct SimClock<T: Real> {
    pub physics_dt: T,
    pub decimation: usize,
}

impl<T: Real> Default for SimClock<T> {
    fn default() -> Self {
        Self {
            physics_dt: T::one() / T::of(120.0),
            decimation: 4,
        }
    }
}

impl<T: Real> SimClock<T> {
    pub fn control_dt(&self) -> T {
        self.physics_dt * T::of_usize(self.decimation)
    }
}
