use crate::error::{check_len, Result};
use crate::geometry::{Pose, Quat, Vec3};
use crate::scalar::Real;

use super::{JointChainModel, JointSpec, ARM_DOF, FINGER_COUNT, HAND_DOF};

/// Every joint origin along the arm plus the palm frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmFrames<T: Real> {
    pub joints: [Vec3<T>; ARM_DOF],
    pub palm: Pose<T>,
}

#[inline]
fn advance<T: Real>(frame: &Pose<T>, joint: &JointSpec<T>, q: T) -> Pose<T> {
    let moved = frame.compose(&joint.offset);
    Pose::new(
        moved.translation,
        (moved.rotation * Quat::from_axis_angle(joint.axis, q)).normalized(),
    )
}

impl<T: Real> ArmFrames<T> {
    pub fn compute(model: &JointChainModel<T>, q: &[T]) -> Result<Self> {
        check_len("arm joint vector", ARM_DOF, q.len())?;
        let mut frame = model.base;
        let mut joints = [Vec3::zero(); ARM_DOF];
        for (i, (joint, &qi)) in model.arm.iter().zip(q).enumerate() {
            frame = advance(&frame, joint, qi);
            joints[i] = frame.translation;
        }
        Ok(Self {
            joints,
            palm: frame.compose(&model.palm_offset),
        })
    }
}

/// Palm pose for the arm configuration `q`.
pub fn forward_kinematics<T: Real>(model: &JointChainModel<T>, q: &[T]) -> Result<Pose<T>> {
    ArmFrames::compute(model, q).map(|f| f.palm)
}

/// World-frame fingertip positions, ordered thumb, index, middle, ring.
pub fn fingertip_positions<T: Real>(
    model: &JointChainModel<T>,
    palm: &Pose<T>,
    q_hand: &[T],
) -> Result<[Vec3<T>; FINGER_COUNT]> {
    check_len("hand joint vector", HAND_DOF, q_hand.len())?;
    let mut tips = [Vec3::zero(); FINGER_COUNT];
    for (tip, finger) in tips.iter_mut().zip(&model.fingers) {
        let mut frame = palm.compose(&finger.root);
        let range = finger.first_joint..finger.first_joint + finger.joint_count;
        for (joint, &qi) in model.hand[range.clone()].iter().zip(&q_hand[range]) {
            frame = advance(&frame, joint, qi);
        }
        *tip = frame.transform_point(finger.tip);
    }
    Ok(tips)
}
