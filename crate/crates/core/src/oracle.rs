//! Scripted interception controller that reads the true object state.
//! It is a solvability check for the environment, not a learned policy.

use crate::env::{CatchEnv, LinkPoints, WorldState};
use crate::error::Result;
use crate::geometry::Vec3;
use crate::scalar::{clamp, Real};
use crate::sim::{closest_approach, JointChainModel, ARM_DOF, HAND_DOF, TABLE_HEIGHT};

/// Damped least-squares inverse kinematics for the grasp-center position,
/// with a central-difference Jacobian. Joint limits are enforced after
/// every iteration.
pub fn solve_position_ik<T: Real>(
    model: &JointChainModel<T>,
    q0: &[T],
    grasp_center: Vec3<T>,
    target: Vec3<T>,
    iterations: usize,
) -> Result<Vec<T>> {
    let point = |q: &[T]| -> Result<Vec3<T>> {
        let f = crate::sim::ArmFrames::compute(model, q)?;
        Ok(f.palm.transform_point(grasp_center))
    };
    let mut q = q0.to_vec();
    let h = T::of(1e-6);
    let damping = T::of(1e-3);
    for _ in 0..iterations {
        let p = point(&q)?;
        let err = target - p;
        if err.norm() < T::of(1e-5) {
            break;
        }
        let mut jac = [[T::zero(); ARM_DOF]; 3];
        for i in 0..ARM_DOF {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            let d = (point(&qp)? - point(&qm)?) * (T::one() / (h + h));
            jac[0][i] = d.x;
            jac[1][i] = d.y;
            jac[2][i] = d.z;
        }
        // dq = Jᵀ (J Jᵀ + λ² I)⁻¹ e
        let mut a = [[T::zero(); 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                a[r][c] = (0..ARM_DOF).map(|i| jac[r][i] * jac[c][i]).sum::<T>();
            }
            a[r][r] += damping * damping;
        }
        let y = solve3(a, [err.x, err.y, err.z]);
        for i in 0..ARM_DOF {
            let dq = jac[0][i] * y[0] + jac[1][i] * y[1] + jac[2][i] * y[2];
            q[i] = model.arm[i].clamp(q[i] + dq);
        }
    }
    Ok(q)
}

fn solve3<T: Real>(a: [[T; 3]; 3], b: [T; 3]) -> [T; 3] {
    let det = |m: &[[T; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    let mut out = [T::zero(); 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][k] = b[r];
        }
        *o = det(&m) / d;
    }
    out
}

/// Moves the grasp center toward the point of the predicted flight path
/// closest to it, and closes the hand once the object is held.
#[derive(Debug, Clone, Copy)]
pub struct InterceptionOracle {
    pub ik_iterations: usize,
}

impl Default for InterceptionOracle {
    fn default() -> Self {
        Self { ik_iterations: 30 }
    }
}

impl InterceptionOracle {
    pub fn act<T: Real>(&self, env: &CatchEnv<T>) -> Result<([T; ARM_DOF], [T; HAND_DOF])> {
        let world = env
            .world()
            .ok_or_else(|| crate::Error::Contract("oracle needs a started episode".into()))?;
        let cfg = env.config();
        let mut a_hand = [T::zero(); HAND_DOF];
        if world.held.is_some() {
            a_hand = [T::one(); HAND_DOF];
            return Ok(([T::zero(); ARM_DOF], a_hand));
        }
        let target = self.intercept_point(world, cfg.grasp_center)?;
        let q_star = solve_position_ik(&world.model, &world.arm.positions, cfg.grasp_center, target, self.ik_iterations)?;
        let lim = cfg.arm_delta_limit;
        let mut a_arm = [T::zero(); ARM_DOF];
        for i in 0..ARM_DOF {
            a_arm[i] = clamp(q_star[i] - world.arm.positions[i], -lim, lim);
        }
        Ok((a_arm, a_hand))
    }

    fn intercept_point<T: Real>(&self, world: &WorldState<T>, grasp_center: Vec3<T>) -> Result<Vec3<T>> {
        let links = LinkPoints::compute(world, grasp_center)?;
        let obj = &world.object;
        let g = T::of(crate::sim::GRAVITY);
        let floor = T::of(TABLE_HEIGHT) + obj.half_extents.z;
        // time until the object reaches the table
        let (z0, vz) = (obj.position.z - floor, obj.linear_velocity.z);
        let t_end = ((vz + (vz * vz + T::of(2.0) * g * z0.max(T::zero())).sqrt()) / g).max(T::zero());
        let (t, _) = closest_approach(obj.position, obj.linear_velocity, links.palm, t_end);
        let v = obj.linear_velocity;
        let half = T::of(0.5);
        Ok(Vec3::new(
            obj.position.x + v.x * t,
            obj.position.y + v.y * t,
            obj.position.z + v.z * t - half * g * t * t,
        ))
    }
}
