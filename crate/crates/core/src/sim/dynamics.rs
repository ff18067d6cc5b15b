use crate::error::{check_len, Error, Result};
use crate::geometry::{Quat, Vec3};
use crate::scalar::Real;

use super::{JointSpec, JointState, ObjectState};

pub const GRAVITY: f64 = 9.81;

/// One semi-implicit Euler step of the unit-inertia PD model
/// `q̈ = k (target - q) - c q̇`, followed by clamping to the joint limits.
/// A clamped joint has its velocity zeroed.
pub fn step_joints<T: Real>(
    state: &JointState<T>,
    target: &[T],
    joints: &[JointSpec<T>],
    dt: T,
) -> Result<JointState<T>> {
    check_len("joint target", state.len(), target.len())?;
    check_len("joint specs", state.len(), joints.len())?;
    if target.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("joint target"));
    }
    let mut next = state.clone();
    for (i, joint) in joints.iter().enumerate() {
        let q = state.positions[i];
        let v = state.velocities[i];
        let acc = joint.stiffness * (target[i] - q) - joint.damping * v;
        let v_new = v + acc * dt;
        let q_new = q + v_new * dt;
        let clamped = joint.clamp(q_new);
        next.positions[i] = clamped;
        next.velocities[i] = if clamped == q_new { v_new } else { T::zero() };
    }
    Ok(next)
}

/// Ballistic box under gravity with a restitution bounce off the horizontal
/// plane at `table_height`. Orientation only feeds the camera.
pub fn step_object<T: Real>(obj: &ObjectState<T>, dt: T, table_height: T) -> ObjectState<T> {
    let mut next = obj.clone();
    let g = Vec3::new(T::zero(), T::zero(), -T::of(GRAVITY));
    next.linear_velocity = obj.linear_velocity + g * dt;
    next.position = obj.position + next.linear_velocity * dt;

    let w = obj.angular_velocity;
    if w.norm_sq() > T::zero() {
        let spin = Quat::from_axis_angle(w, w.norm() * dt);
        next.orientation = (spin * obj.orientation).normalized();
    }

    let floor = table_height + obj.half_extents.z;
    if next.position.z < floor {
        next.position.z = floor;
        if next.linear_velocity.z < T::zero() {
            next.linear_velocity.z = -obj.restitution * next.linear_velocity.z;
        }
    }
    next
}
