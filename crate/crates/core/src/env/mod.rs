//! The two-agent catching task: one thrown object, an arm agent and a hand
//! agent sharing a world, each with its own observation and reward.

mod batch;
mod events;
mod observation;
mod reward;
pub mod trace;

pub use batch::{env_rng, BatchEnv, BatchStep, EpisodeSummary};
pub use events::{detect_events, EpisodeMemory, EventProbe};
pub use observation::{
    assemble_observations, visual_slots, Frame, Observations, Variant, ARM_OBS_DIM, ARM_STEP_DIM,
    CRITIC_OBS_DIM, CRITIC_STEP_DIM, HAND_OBS_DIM, HAND_STEP_DIM, HISTORY, POSE_DIM,
    UNIFIED_ACTION_DIM, UNIFIED_OBS_DIM, VISUAL_DIM,
};
pub use reward::{
    arm_reward, compute_r_dist, hand_reward, unified_reward, EventFlags, RewardBreakdown,
    RewardConfig,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::geometry::{Pose, Vec3};
use crate::scalar::{clamp, Real};
use crate::sim::sysid::GainScales;
use crate::sim::{
    fingertip_positions, randomize_episode, sample_throw, step_joints, step_object, ArmFrames,
    EpisodeParams, JointChainModel, JointSpec, JointState, ObjectState, RandomizationConfig, SimClock,
    ARM_DOF, FINGER_COUNT, HAND_DOF, TABLE_HEIGHT,
};
use crate::vision::{
    extract_pixel_features, object_bounding_box, perturb_box, BoundingBox, CameraConfig,
    CameraModel, FeatureScaling, PixelFeatures,
};

/// Episode length and the geometric thresholds behind the event flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", default)]
pub struct EpisodeConfig<T: Real> {
    /// Control steps per episode.
    pub max_timesteps: usize,
    pub capture_radius: T,
    pub approach_radius: T,
    /// Object centers below this height count as dropped unless held.
    pub drop_height: T,
    pub hold_steps: usize,
    /// Palm-object speed (m/s) below which a grasp counts as stable.
    pub hold_speed: T,
}

impl<T: Real> Default for EpisodeConfig<T> {
    fn default() -> Self {
        Self {
            max_timesteps: 90,
            capture_radius: T::of(0.08),
            approach_radius: T::of(0.15),
            drop_height: T::of(TABLE_HEIGHT + 0.05),
            hold_steps: 10,
            hold_speed: T::of(0.5),
        }
    }
}

impl<T: Real> EpisodeConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_timesteps == 0 {
            return Err(Error::Config("episode.max_timesteps must be at least 1".into()));
        }
        if !(self.capture_radius > T::zero() && self.approach_radius > T::zero()) {
            return Err(Error::Config("episode radii must be positive".into()));
        }
        if self.hold_steps == 0 {
            return Err(Error::Config("episode.hold_steps must be at least 1".into()));
        }
        if !(self.hold_speed > T::zero()) || !self.drop_height.is_finite() {
            return Err(Error::Config("episode.hold_speed must be positive and drop_height finite".into()));
        }
        Ok(())
    }
}

/// Everything that defines one environment instance apart from its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", default)]
pub struct EnvConfig<T: Real> {
    pub variant: Variant,
    pub episode: EpisodeConfig<T>,
    pub reward: RewardConfig<T>,
    pub randomization: RandomizationConfig<T>,
    pub camera: CameraConfig<T>,
    pub clock: SimClock<T>,
    /// Largest joint-position change (rad) one arm action may command.
    pub arm_delta_limit: T,
    /// Half-width of the uniform pixel jitter applied to box corners.
    pub box_perturbation_px: T,
    pub feature_scaling: FeatureScaling,
    /// Palm-frame point the hand closes around; "palm" distances use it.
    pub grasp_center: Vec3<T>,
    /// Identified gain corrections, arm joints then hand joints. Empty
    /// means nominal gains.
    pub joint_scales: Vec<GainScales<T>>,
}

impl<T: Real> Default for EnvConfig<T> {
    fn default() -> Self {
        Self {
            variant: Variant::Proposed,
            episode: EpisodeConfig::default(),
            reward: RewardConfig::default(),
            randomization: RandomizationConfig::default(),
            camera: CameraConfig::default(),
            clock: SimClock::default(),
            arm_delta_limit: T::of(0.1),
            box_perturbation_px: T::of(5.0),
            feature_scaling: FeatureScaling::Normalized,
            grasp_center: Vec3::from_f64([0.04, 0.0, 0.07]),
            joint_scales: Vec::new(),
        }
    }
}

impl<T: Real> EnvConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.episode.validate()?;
        self.randomization.validate()?;
        self.camera.build()?;
        if self.clock.decimation == 0 || !(self.clock.physics_dt > T::zero()) {
            return Err(Error::Config("clock needs a positive dt and decimation".into()));
        }
        if !(self.arm_delta_limit > T::zero()) {
            return Err(Error::Config("arm_delta_limit must be positive".into()));
        }
        if !(self.box_perturbation_px >= T::zero()) {
            return Err(Error::Config("box_perturbation_px must be non-negative".into()));
        }
        if !self.joint_scales.is_empty() && self.joint_scales.len() != ARM_DOF + HAND_DOF {
            return Err(Error::Config(format!(
                "joint_scales must list {} entries (arm then hand), got {}",
                ARM_DOF + HAND_DOF,
                self.joint_scales.len()
            )));
        }
        Ok(())
    }

    /// The nominal robot with any identified gain scales applied.
    pub fn robot_model(&self) -> JointChainModel<T> {
        let mut model = JointChainModel::tabletop();
        for (j, s) in model.arm.iter_mut().chain(model.hand.iter_mut()).zip(&self.joint_scales) {
            j.stiffness *= s.stiffness;
            j.damping *= s.damping;
        }
        model
    }
}

/// Full simulator truth for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct WorldState<T: Real> {
    pub arm: JointState<T>,
    pub hand: JointState<T>,
    pub object: ObjectState<T>,
    pub params: EpisodeParams<T>,
    /// Robot with this episode's gains.
    pub model: JointChainModel<T>,
    /// Object pose in the palm frame while grasped.
    pub held: Option<Pose<T>>,
    /// World velocity of the grasp center over the last substep.
    pub palm_velocity: Vec3<T>,
    pub launch_position: Vec3<T>,
    /// Control steps taken.
    pub step: usize,
    /// Physics substeps taken.
    pub substeps: usize,
}

impl<T: Real> WorldState<T> {
    pub fn time(&self, clock: &SimClock<T>) -> T {
        clock.physics_dt * T::of_usize(self.substeps)
    }
}

/// Link positions the rewards and events are computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkPoints<T: Real> {
    pub palm_pose: Pose<T>,
    pub palm: Vec3<T>,
    pub fingertips: [Vec3<T>; FINGER_COUNT],
    /// Lowest point among the arm joint origins and the palm.
    pub lowest: T,
}

impl<T: Real> LinkPoints<T> {
    pub fn compute(world: &WorldState<T>, grasp_center: Vec3<T>) -> Result<Self> {
        let frames = ArmFrames::compute(&world.model, &world.arm.positions)?;
        let palm = frames.palm.transform_point(grasp_center);
        let fingertips = fingertip_positions(&world.model, &frames.palm, &world.hand.positions)?;
        let lowest = frames
            .joints
            .iter()
            .map(|p| p.z)
            .fold(frames.palm.translation.z.min(palm.z), T::min);
        Ok(Self {
            palm_pose: frames.palm,
            palm,
            fingertips,
            lowest,
        })
    }

    pub fn tips_within(&self, center: Vec3<T>, radius: T) -> usize {
        self.fingertips.iter().filter(|t| t.distance(center) <= radius).count()
    }
}

/// Box and feature bookkeeping of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct VisualInfo<T: Real> {
    /// Unperturbed projection, if the object is in view.
    pub true_box: Option<BoundingBox<T>>,
    /// Box the features were computed from.
    pub observed_box: BoundingBox<T>,
    pub features: PixelFeatures<T>,
    pub tracking_lost: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T: Real> {
    pub observations: Observations<T>,
    pub reward_arm: T,
    pub reward_hand: T,
    pub breakdown_arm: RewardBreakdown<T>,
    pub breakdown_hand: RewardBreakdown<T>,
    pub flags: EventFlags,
    pub done: bool,
    pub visual: VisualInfo<T>,
    /// Actions after clamping, as the robot received them (before noise).
    pub a_arm: [T; ARM_DOF],
    pub a_hand: [T; HAND_DOF],
}

impl<T: Real> StepOutcome<T> {
    /// Reward of the single-agent baseline.
    pub fn reward_unified(&self) -> (T, RewardBreakdown<T>) {
        unified_reward(&self.breakdown_arm, &self.breakdown_hand)
    }
}

/// Written as a convex combination so that ±1 land exactly on the limits.
fn rescale_to_limits<T: Real>(j: &JointSpec<T>, a: T) -> T {
    let s = (a + T::one()) * T::of(0.5);
    j.limit_lo * (T::one() - s) + j.limit_hi * s
}

fn gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R, std: T) -> T {
    if std > T::zero() {
        let n = Normal::new(0.0, std.as_f64()).expect("finite positive std");
        T::of(n.sample(rng))
    } else {
        T::zero()
    }
}

/// One catching environment with its own random stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CatchEnv<T: Real> {
    cfg: EnvConfig<T>,
    model: JointChainModel<T>,
    camera: CameraModel<T>,
    rng: ChaCha8Rng,
    world: Option<WorldState<T>>,
    memory: EpisodeMemory<T>,
    history: Option<[Frame<T>; HISTORY]>,
    last_box: Option<BoundingBox<T>>,
    last_visual: Option<VisualInfo<T>>,
    done: bool,
}

impl<T: Real> CatchEnv<T> {
    pub fn new(cfg: EnvConfig<T>, seed: u64) -> Result<Self> {
        Self::with_rng(cfg, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng(cfg: EnvConfig<T>, rng: ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let model = cfg.robot_model();
        model.validate()?;
        let camera = cfg.camera.build()?;
        Ok(Self {
            cfg,
            model,
            camera,
            rng,
            world: None,
            memory: EpisodeMemory::default(),
            history: None,
            last_box: None,
            last_visual: None,
            done: true,
        })
    }

    pub fn config(&self) -> &EnvConfig<T> {
        &self.cfg
    }

    pub fn camera(&self) -> &CameraModel<T> {
        &self.camera
    }

    pub fn world(&self) -> Option<&WorldState<T>> {
        self.world.as_ref()
    }

    /// Direct access for constructing test scenarios and scripted policies.
    pub fn world_mut(&mut self) -> Option<&mut WorldState<T>> {
        self.world.as_mut()
    }

    pub fn memory(&self) -> &EpisodeMemory<T> {
        &self.memory
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn last_visual(&self) -> Option<&VisualInfo<T>> {
        self.last_visual.as_ref()
    }

    /// Starts a new episode: randomized gains and start pose, a fresh throw,
    /// and a history filled with two copies of the first frame.
    pub fn reset(&mut self) -> Result<Observations<T>> {
        let params = randomize_episode(&mut self.rng, &self.cfg.randomization, &self.model);
        let object = sample_throw(&mut self.rng, &self.cfg.randomization)?;
        let model = params.apply(&self.model);
        let q_arm: Vec<T> = model
            .arm
            .iter()
            .zip(model.arm_home.iter().zip(&params.arm_initial_offset))
            .map(|(j, (&h, &o))| j.clamp(h + o))
            .collect();
        let q_hand: Vec<T> = model.hand.iter().map(|j| j.clamp(T::zero())).collect();
        let world = WorldState {
            arm: JointState::at_rest(q_arm),
            hand: JointState::at_rest(q_hand),
            launch_position: object.position,
            object,
            params,
            model,
            held: None,
            palm_velocity: Vec3::zero(),
            step: 0,
            substeps: 0,
        };
        self.start_from(world)
    }

    /// Starts an episode from an explicit world state.
    pub fn start_from(&mut self, world: WorldState<T>) -> Result<Observations<T>> {
        check_len("arm state", ARM_DOF, world.arm.len())?;
        check_len("hand state", HAND_DOF, world.hand.len())?;
        world.object.validate()?;
        self.world = Some(world);
        self.memory = EpisodeMemory::default();
        self.last_box = None;
        self.done = false;
        let frame = self.observe_frame(&[T::zero(); ARM_DOF], &[T::zero(); HAND_DOF])?;
        let history = [frame.clone(), frame];
        let obs = assemble_observations(&history, self.cfg.variant);
        self.history = Some(history);
        Ok(obs)
    }

    /// Current observations without advancing the world.
    pub fn observations(&self) -> Result<Observations<T>> {
        let h = self
            .history
            .as_ref()
            .ok_or_else(|| Error::Contract("observations requested before reset".into()))?;
        Ok(assemble_observations(h, self.cfg.variant))
    }

    fn observe_box(&mut self) -> (Option<BoundingBox<T>>, BoundingBox<T>, bool) {
        let world = self.world.as_ref().expect("world present");
        let true_box = object_bounding_box(&self.camera, &world.object)
            .ok()
            .filter(|b| b.width() > T::zero() && b.height() > T::zero());
        let seen = true_box.map(|b| perturb_box(&mut self.rng, &b, self.cfg.box_perturbation_px, &self.camera));
        let observed = match (seen, self.last_box) {
            (Some(b), _) => b,
            (None, Some(prev)) => prev,
            // Nothing seen yet: a degenerate box at the image center.
            (None, None) => {
                let (cx, cy) = (self.camera.cx, self.camera.cy);
                BoundingBox { u_min: cx, v_min: cy, u_max: cx, v_max: cy }
            }
        };
        (true_box, observed, seen.is_none())
    }

    fn observe_frame(&mut self, a_arm: &[T; ARM_DOF], a_hand: &[T; HAND_DOF]) -> Result<Frame<T>> {
        let (true_box, observed, lost) = self.observe_box();
        let prev = self.last_box.unwrap_or(observed);
        let features = extract_pixel_features(&observed, &prev, &self.camera, self.cfg.feature_scaling);
        self.last_box = Some(observed);
        let (sx, sy) = self.cfg.feature_scaling.factors(&self.camera);
        self.last_visual = Some(VisualInfo {
            true_box,
            observed_box: observed,
            features,
            tracking_lost: lost,
        });

        let world = self.world.as_ref().expect("world present");
        let palm = ArmFrames::compute(&world.model, &world.arm.positions)?.palm;
        let (arm_std, hand_std) = (
            world.params.arm_observation_noise_std,
            world.params.hand_observation_noise_std,
        );
        let mut pose_eef = palm.to_array7();
        let mut q_arm = [T::zero(); ARM_DOF];
        let mut q_hand = [T::zero(); HAND_DOF];
        q_arm.copy_from_slice(&world.arm.positions);
        q_hand.copy_from_slice(&world.hand.positions);
        let (object, launch) = (world.object.position, world.launch_position);
        for v in pose_eef.iter_mut().chain(q_arm.iter_mut()) {
            *v += gaussian(&mut self.rng, arm_std);
        }
        for v in q_hand.iter_mut() {
            *v += gaussian(&mut self.rng, hand_std);
        }
        Ok(Frame {
            features,
            box_size: (observed.width() * sx, observed.height() * sy),
            pose_eef,
            q_arm,
            a_arm: *a_arm,
            q_hand,
            a_hand: *a_hand,
            p_object: object,
            initial_object: launch,
        })
    }

    /// Joint target of a hand action in `[-1, 1]`, mapped affinely onto the
    /// joint range.
    pub fn hand_target(&self, a: T, joint: usize) -> T {
        rescale_to_limits(&self.model.hand[joint], a)
    }

    /// Applies one control action for `decimation` physics substeps.
    pub fn step(&mut self, a_arm: &[T], a_hand: &[T]) -> Result<StepOutcome<T>> {
        if self.done || self.world.is_none() {
            return Err(Error::Contract("step called on a finished episode; call reset first".into()));
        }
        check_len("arm action", ARM_DOF, a_arm.len())?;
        check_len("hand action", HAND_DOF, a_hand.len())?;
        if a_arm.iter().chain(a_hand).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("action"));
        }
        let lim = self.cfg.arm_delta_limit;
        let one = T::one();
        let mut arm_cmd = [T::zero(); ARM_DOF];
        let mut hand_cmd = [T::zero(); HAND_DOF];
        for (c, &a) in arm_cmd.iter_mut().zip(a_arm) {
            *c = clamp(a, -lim, lim);
        }
        for (c, &a) in hand_cmd.iter_mut().zip(a_hand) {
            *c = clamp(a, -one, one);
        }

        let world = self.world.as_ref().expect("checked above");
        let (arm_noise, hand_noise) = (world.params.arm_action_noise_std, world.params.hand_action_noise_std);
        let arm_target: Vec<T> = (0..ARM_DOF)
            .map(|i| {
                let delta = clamp(a_arm[i] + gaussian(&mut self.rng, arm_noise), -lim, lim);
                world.model.arm[i].clamp(world.arm.positions[i] + delta)
            })
            .collect();
        let hand_target: Vec<T> = (0..HAND_DOF)
            .map(|i| {
                let a = clamp(a_hand[i] + gaussian(&mut self.rng, hand_noise), -one, one);
                rescale_to_limits(&world.model.hand[i], a)
            })
            .collect();

        let grasp_center = self.cfg.grasp_center;
        let before = LinkPoints::compute(world, grasp_center)?;
        let obj_before = world.object.position;
        let mut min_palm_distance = before.palm.distance(obj_before);
        let mut min_height = obj_before.z;

        let dt = self.cfg.clock.physics_dt;
        let table = T::of(TABLE_HEIGHT);
        let capture = self.cfg.episode.capture_radius;
        let world = self.world.as_mut().expect("checked above");
        let mut palm_prev = before.palm;
        for _ in 0..self.cfg.clock.decimation {
            world.arm = step_joints(&world.arm, &arm_target, &world.model.arm, dt)?;
            world.hand = step_joints(&world.hand, &hand_target, &world.model.hand, dt)?;
            let links = LinkPoints::compute(world, grasp_center)?;
            world.palm_velocity = (links.palm - palm_prev) * (one / dt);
            palm_prev = links.palm;
            match world.held {
                Some(rel) => {
                    let pose = links.palm_pose.compose(&rel);
                    world.object.position = pose.translation;
                    world.object.orientation = pose.rotation;
                    world.object.linear_velocity = world.palm_velocity;
                    world.object.angular_velocity = Vec3::zero();
                    if links.tips_within(world.object.position, capture) < 2 {
                        world.held = None;
                    }
                }
                None => {
                    world.object = step_object(&world.object, dt, table);
                    let p = world.object.position;
                    if links.palm.distance(p) <= capture && links.tips_within(p, capture) >= 2 {
                        let obj_pose = Pose::new(p, world.object.orientation);
                        world.held = Some(links.palm_pose.inverse().compose(&obj_pose));
                        world.object.linear_velocity = world.palm_velocity;
                        world.object.angular_velocity = Vec3::zero();
                    }
                }
            }
            min_palm_distance = min_palm_distance.min(links.palm.distance(world.object.position));
            if world.held.is_none() {
                min_height = min_height.min(world.object.position.z);
            }
            world.substeps += 1;
        }
        world.step += 1;

        let world = self.world.as_ref().expect("checked above");
        let after = LinkPoints::compute(world, grasp_center)?;
        let obj = world.object.position;
        let r_palm = compute_r_dist(before.palm, obj_before, after.palm, obj);
        let mut r_fingers = [T::zero(); FINGER_COUNT];
        for (k, r) in r_fingers.iter_mut().enumerate() {
            *r = compute_r_dist(before.fingertips[k], obj_before, after.fingertips[k], obj);
        }
        let probe = EventProbe {
            palm_distance: after.palm.distance(obj),
            min_palm_distance,
            tips_within: after.tips_within(obj, capture),
            relative_speed: (world.object.linear_velocity - world.palm_velocity).norm(),
            held: world.held.is_some(),
            object_height: if world.held.is_some() { obj.z } else { min_height },
            lowest_link: after.lowest,
            table_height: table,
        };
        let flags = detect_events(&probe, &mut self.memory, &self.cfg.episode);
        debug_assert!(!(flags.succ && flags.drop));
        let (reward_arm, breakdown_arm) = arm_reward(r_palm, &flags, &arm_cmd, &self.cfg.reward);
        let (reward_hand, breakdown_hand) = hand_reward(r_palm, &r_fingers, &flags, &hand_cmd, &self.cfg.reward);
        let step = world.step;
        self.memory.steps = step;
        self.done = flags.drop || self.memory.succeeded || step >= self.cfg.episode.max_timesteps;

        let frame = self.observe_frame(&arm_cmd, &hand_cmd)?;
        let history = self.history.as_mut().expect("history set at reset");
        history.swap(0, 1);
        history[1] = frame;
        let observations = assemble_observations(history, self.cfg.variant);
        Ok(StepOutcome {
            observations,
            reward_arm,
            reward_hand,
            breakdown_arm,
            breakdown_hand,
            flags,
            done: self.done,
            visual: self.last_visual.expect("set by observe_frame"),
            a_arm: arm_cmd,
            a_hand: hand_cmd,
        })
    }
}
