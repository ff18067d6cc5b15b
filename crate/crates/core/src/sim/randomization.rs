use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Quat, Vec3};
use crate::scalar::Real;

use super::{JointChainModel, ObjectState, ARM_DOF, GRAVITY, HAND_DOF, TABLE_HEIGHT};

/// Closed interval sampled uniformly. `lo == hi` collapses to a constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct UniformRange<T: Real> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> UniformRange<T> {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self {
            lo: T::of(lo),
            hi: T::of(hi),
        }
    }

    pub fn constant(v: f64) -> Self {
        Self::new(v, v)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let u: f64 = rng.random();
        self.lo + (self.hi - self.lo) * T::of(u)
    }

    pub fn midpoint(&self) -> T {
        (self.lo + self.hi) * T::of(0.5)
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.lo && x <= self.hi
    }

    fn check(&self, name: &str) -> Result<()> {
        if self.lo <= self.hi {
            Ok(())
        } else {
            Err(Error::Config(format!("{name}: lo must not exceed hi")))
        }
    }
}

/// How thrown objects are launched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", default)]
pub struct ThrowConfig<T: Real> {
    pub launch_lo: Vec3<T>,
    pub launch_hi: Vec3<T>,
    /// Launch speed (m/s).
    pub speed: UniformRange<T>,
    /// Launch angle above the horizontal (degrees).
    pub elevation_deg: UniformRange<T>,
    /// Horizontal deviation from the line toward `workspace_center` (degrees).
    pub azimuth_deg: UniformRange<T>,
    /// Point the throws are aimed at; also the arm's home palm position.
    pub workspace_center: Vec3<T>,
    /// Accepted throws pass within this distance of `workspace_center`.
    pub reach_radius: T,
    pub max_retries: usize,
    pub nominal_mass: T,
    pub nominal_half_extent: T,
    /// Uniform scale applied to the nominal box size.
    pub size_scale: UniformRange<T>,
    pub randomize_orientation: bool,
    /// Angular speed bound (rad/s) per axis; zero disables spin.
    pub max_angular_speed: T,
}

impl<T: Real> Default for ThrowConfig<T> {
    fn default() -> Self {
        Self {
            launch_lo: Vec3::from_f64([2.2, -0.5, 1.0]),
            launch_hi: Vec3::from_f64([2.8, 0.5, 1.4]),
            speed: UniformRange::new(4.0, 6.0),
            elevation_deg: UniformRange::new(10.0, 45.0),
            azimuth_deg: UniformRange::new(-8.0, 8.0),
            workspace_center: Vec3::from_f64([0.664, 0.0, 1.317]),
            reach_radius: T::of(0.25),
            max_retries: 10_000,
            nominal_mass: T::of(0.1),
            nominal_half_extent: T::of(0.03),
            size_scale: UniformRange::new(0.8, 1.2),
            randomize_orientation: true,
            max_angular_speed: T::zero(),
        }
    }
}

/// Per-episode domain randomization ranges plus throw sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", default)]
pub struct RandomizationConfig<T: Real> {
    pub arm_stiffness_scale: UniformRange<T>,
    pub arm_damping_scale: UniformRange<T>,
    pub arm_action_noise_std: T,
    pub arm_observation_noise_std: T,
    pub arm_initial_joint_offset: UniformRange<T>,
    pub hand_stiffness_scale: UniformRange<T>,
    pub hand_damping_scale: UniformRange<T>,
    pub hand_action_noise_std: T,
    pub hand_observation_noise_std: T,
    pub object_mass_scale: UniformRange<T>,
    pub object_restitution: UniformRange<T>,
    pub throw: ThrowConfig<T>,
}

impl<T: Real> Default for RandomizationConfig<T> {
    fn default() -> Self {
        Self {
            arm_stiffness_scale: UniformRange::new(0.8, 1.2),
            arm_damping_scale: UniformRange::new(0.8, 1.2),
            arm_action_noise_std: T::of(0.03),
            arm_observation_noise_std: T::of(0.005),
            arm_initial_joint_offset: UniformRange::new(-0.125, 0.125),
            hand_stiffness_scale: UniformRange::new(0.7, 1.3),
            hand_damping_scale: UniformRange::new(0.7, 1.3),
            hand_action_noise_std: T::of(0.02),
            hand_observation_noise_std: T::of(0.005),
            object_mass_scale: UniformRange::new(0.5, 1.5),
            object_restitution: UniformRange::new(0.0, 0.5),
            throw: ThrowConfig::default(),
        }
    }
}

impl<T: Real> RandomizationConfig<T> {
    /// No dynamics scaling, no noise, no initial pose offset.
    pub fn disabled() -> Self {
        Self {
            arm_stiffness_scale: UniformRange::constant(1.0),
            arm_damping_scale: UniformRange::constant(1.0),
            arm_action_noise_std: T::zero(),
            arm_observation_noise_std: T::zero(),
            arm_initial_joint_offset: UniformRange::constant(0.0),
            hand_stiffness_scale: UniformRange::constant(1.0),
            hand_damping_scale: UniformRange::constant(1.0),
            hand_action_noise_std: T::zero(),
            hand_observation_noise_std: T::zero(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arm_stiffness_scale.check("arm_stiffness_scale")?;
        self.arm_damping_scale.check("arm_damping_scale")?;
        self.arm_initial_joint_offset.check("arm_initial_joint_offset")?;
        self.hand_stiffness_scale.check("hand_stiffness_scale")?;
        self.hand_damping_scale.check("hand_damping_scale")?;
        self.object_mass_scale.check("object_mass_scale")?;
        self.object_restitution.check("object_restitution")?;
        for (name, s) in [
            ("arm_action_noise_std", self.arm_action_noise_std),
            ("arm_observation_noise_std", self.arm_observation_noise_std),
            ("hand_action_noise_std", self.hand_action_noise_std),
            ("hand_observation_noise_std", self.hand_observation_noise_std),
        ] {
            if !(s >= T::zero()) {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        if !(self.object_mass_scale.lo > T::zero()) {
            return Err(Error::Config("object_mass_scale must be positive".into()));
        }
        if !(self.object_restitution.lo >= T::zero() && self.object_restitution.hi <= T::one()) {
            return Err(Error::Config("object_restitution must lie in [0, 1]".into()));
        }
        let t = &self.throw;
        t.speed.check("throw.speed")?;
        t.elevation_deg.check("throw.elevation_deg")?;
        t.azimuth_deg.check("throw.azimuth_deg")?;
        t.size_scale.check("throw.size_scale")?;
        let lo = t.launch_lo.to_array();
        let hi = t.launch_hi.to_array();
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::Config("throw.launch_lo must not exceed launch_hi".into()));
        }
        if !(t.reach_radius > T::zero()) || t.max_retries == 0 {
            return Err(Error::Config("throw.reach_radius and max_retries must be positive".into()));
        }
        if !(t.nominal_mass > T::zero() && t.nominal_half_extent > T::zero() && t.size_scale.lo > T::zero()) {
            return Err(Error::Config("throw nominal mass and size must be positive".into()));
        }
        Ok(())
    }
}

fn uniform_quaternion<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Quat<T> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    Quat::new(
        T::of(a * (tau * u2).sin()),
        T::of(a * (tau * u2).cos()),
        T::of(b * (tau * u3).sin()),
        T::of(b * (tau * u3).cos()),
    )
    .normalized()
}

/// Real roots of `a t³ + b t² + c t + d` (with `a != 0`).
fn cubic_roots(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let (b, c, d) = (b / a, c / a, d / a);
    // t = s - b/3 gives s³ + p s + q = 0.
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    if disc > 0.0 {
        let r = disc.sqrt();
        vec![(-q / 2.0 + r).cbrt() + (-q / 2.0 - r).cbrt() - shift]
    } else if p == 0.0 {
        vec![-shift]
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3)
            .map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - shift)
            .collect()
    }
}

/// Closest approach of the continuous parabola `p0 + v t + ½ g t²` to
/// `point` over `t ∈ [0, t_end]`. Returns `(t, distance)`.
pub fn closest_approach<T: Real>(p0: Vec3<T>, v: Vec3<T>, point: Vec3<T>, t_end: T) -> (T, T) {
    let d = (p0 - point).to_array().map(|x| x.as_f64());
    let v = v.to_array().map(|x| x.as_f64());
    let g = -GRAVITY;
    let t_end = t_end.as_f64();
    let pos = |t: f64| [d[0] + v[0] * t, d[1] + v[1] * t, d[2] + v[2] * t + 0.5 * g * t * t];
    let dist = |t: f64| {
        let p = pos(t);
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
    };
    // d/dt |r|² / 2 = r · r' with r' = v + g t ez.
    let vv = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let dv = d[0] * v[0] + d[1] * v[1] + d[2] * v[2];
    let roots = cubic_roots(0.5 * g * g, 1.5 * g * v[2], vv + d[2] * g, dv);
    let mut best = (0.0, dist(0.0));
    for t in roots.into_iter().chain([t_end]) {
        if (0.0..=t_end).contains(&t) {
            let r = dist(t);
            if r < best.1 {
                best = (t, r);
            }
        }
    }
    (T::of(best.0), T::of(best.1))
}

/// Time for the parabola's height to fall to `floor` (or `horizon`).
fn landing_time(z0: f64, vz: f64, floor: f64, horizon: f64) -> f64 {
    // z0 + vz t - ½ g t² = floor
    let a = 0.5 * GRAVITY;
    let disc = vz * vz + 4.0 * a * (z0 - floor);
    if disc < 0.0 {
        return 0.0;
    }
    ((vz + disc.sqrt()) / (2.0 * a)).clamp(0.0, horizon)
}

/// Draws a thrown object whose flight passes near the workspace center.
pub fn sample_throw<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &RandomizationConfig<T>,
) -> Result<ObjectState<T>> {
    let t = &cfg.throw;
    let deg = T::of(std::f64::consts::PI / 180.0);
    for _ in 0..t.max_retries {
        let lo = t.launch_lo;
        let hi = t.launch_hi;
        let p0 = Vec3::new(
            UniformRange { lo: lo.x, hi: hi.x }.sample(rng),
            UniformRange { lo: lo.y, hi: hi.y }.sample(rng),
            UniformRange { lo: lo.z, hi: hi.z }.sample(rng),
        );
        let to_center = t.workspace_center - p0;
        let heading = to_center.y.atan2(to_center.x) + t.azimuth_deg.sample(rng) * deg;
        let elevation = t.elevation_deg.sample(rng) * deg;
        let speed = t.speed.sample(rng);
        let v = Vec3::new(
            speed * elevation.cos() * heading.cos(),
            speed * elevation.cos() * heading.sin(),
            speed * elevation.sin(),
        );
        let orientation = if t.randomize_orientation {
            uniform_quaternion(rng)
        } else {
            Quat::identity()
        };
        let w_max = t.max_angular_speed;
        let angular_velocity = if w_max > T::zero() {
            let r = UniformRange { lo: -w_max, hi: w_max };
            Vec3::new(r.sample(rng), r.sample(rng), r.sample(rng))
        } else {
            Vec3::zero()
        };
        let half = t.nominal_half_extent * t.size_scale.sample(rng);
        let mass = t.nominal_mass * cfg.object_mass_scale.sample(rng);
        let restitution = cfg.object_restitution.sample(rng);

        let t_end = landing_time(
            p0.z.as_f64(),
            v.z.as_f64(),
            TABLE_HEIGHT + half.as_f64(),
            3.0,
        );
        let (_, miss) = closest_approach(p0, v, t.workspace_center, T::of(t_end));
        if miss <= t.reach_radius {
            return Ok(ObjectState {
                position: p0,
                orientation,
                linear_velocity: v,
                angular_velocity,
                mass,
                restitution,
                half_extents: Vec3::new(half, half, half),
            });
        }
    }
    Err(Error::ThrowSampling(t.max_retries))
}

/// Per-episode dynamics and noise draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EpisodeParams<T: Real> {
    pub arm_stiffness_scale: Vec<T>,
    pub arm_damping_scale: Vec<T>,
    pub hand_stiffness_scale: Vec<T>,
    pub hand_damping_scale: Vec<T>,
    pub arm_initial_offset: Vec<T>,
    pub arm_action_noise_std: T,
    pub arm_observation_noise_std: T,
    pub hand_action_noise_std: T,
    pub hand_observation_noise_std: T,
}

impl<T: Real> EpisodeParams<T> {
    pub fn nominal() -> Self {
        Self {
            arm_stiffness_scale: vec![T::one(); ARM_DOF],
            arm_damping_scale: vec![T::one(); ARM_DOF],
            hand_stiffness_scale: vec![T::one(); HAND_DOF],
            hand_damping_scale: vec![T::one(); HAND_DOF],
            arm_initial_offset: vec![T::zero(); ARM_DOF],
            arm_action_noise_std: T::zero(),
            arm_observation_noise_std: T::zero(),
            hand_action_noise_std: T::zero(),
            hand_observation_noise_std: T::zero(),
        }
    }

    /// The model with this episode's gain scales applied.
    pub fn apply(&self, model: &JointChainModel<T>) -> JointChainModel<T> {
        let mut m = model.clone();
        for (j, (ks, cs)) in m
            .arm
            .iter_mut()
            .zip(self.arm_stiffness_scale.iter().zip(&self.arm_damping_scale))
        {
            j.stiffness *= *ks;
            j.damping *= *cs;
        }
        for (j, (ks, cs)) in m
            .hand
            .iter_mut()
            .zip(self.hand_stiffness_scale.iter().zip(&self.hand_damping_scale))
        {
            j.stiffness *= *ks;
            j.damping *= *cs;
        }
        m
    }
}

/// Samples gain scales per joint and the initial arm pose offset.
pub fn randomize_episode<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &RandomizationConfig<T>,
    model: &JointChainModel<T>,
) -> EpisodeParams<T> {
    let mut draw = |r: &UniformRange<T>, n: usize| -> Vec<T> { (0..n).map(|_| r.sample(rng)).collect() };
    let arm_n = model.arm.len();
    let hand_n = model.hand.len();
    EpisodeParams {
        arm_stiffness_scale: draw(&cfg.arm_stiffness_scale, arm_n),
        arm_damping_scale: draw(&cfg.arm_damping_scale, arm_n),
        hand_stiffness_scale: draw(&cfg.hand_stiffness_scale, hand_n),
        hand_damping_scale: draw(&cfg.hand_damping_scale, hand_n),
        arm_initial_offset: draw(&cfg.arm_initial_joint_offset, arm_n),
        arm_action_noise_std: cfg.arm_action_noise_std,
        arm_observation_noise_std: cfg.arm_observation_noise_std,
        hand_action_noise_std: cfg.hand_action_noise_std,
        hand_observation_noise_std: cfg.hand_observation_noise_std,
    }
}
