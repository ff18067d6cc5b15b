//! Pinhole projection of the object and the six pixel-level motion
//! features fed to the policies: box center, center motion and size change.
//!
//! Camera frame follows the usual computer-vision convention: x right,
//! y down, z along the optical axis.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Quat, Vec3};
use crate::scalar::Real;
use crate::sim::ObjectState;

/// Minimum camera-frame depth for a point to count as visible.
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CameraModel<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: T,
    pub height: T,
    pub world_to_camera: Pose<T>,
}

/// Camera placement and intrinsics as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", default)]
pub struct CameraConfig<T: Real> {
    pub width: usize,
    pub height: usize,
    pub horizontal_fov_deg: T,
    pub eye: Vec3<T>,
    pub look_at: Vec3<T>,
}

impl<T: Real> Default for CameraConfig<T> {
    /// 640x480 with a 69° horizontal field of view, 0.5 m behind and 2.2 m
    /// above the arm base, aimed between the catch zone and the launch zone.
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            horizontal_fov_deg: T::of(69.0),
            eye: Vec3::from_f64([-0.5, 0.0, 0.81 + 2.2]),
            look_at: Vec3::from_f64([1.3, 0.0, 1.25]),
        }
    }
}

impl<T: Real> CameraConfig<T> {
    pub fn build(&self) -> Result<CameraModel<T>> {
        let half = self.horizontal_fov_deg.to_radians() * T::of(0.5);
        if !(half > T::zero() && half < T::FRAC_PI_2()) {
            return Err(Error::Config("horizontal_fov_deg must lie in (0, 180)".into()));
        }
        let w = T::of_usize(self.width);
        let h = T::of_usize(self.height);
        let f = w * T::of(0.5) / half.tan();
        CameraModel::look_at(f, f, w, h, self.eye, self.look_at)
    }
}

impl<T: Real> CameraModel<T> {
    /// Camera at `eye` aimed at `target`, with world +z projecting upward
    /// in the image and the principal point at the image center.
    pub fn look_at(fx: T, fy: T, width: T, height: T, eye: Vec3<T>, target: Vec3<T>) -> Result<Self> {
        let forward = (target - eye).normalized();
        let up = Vec3::new(T::zero(), T::zero(), T::one());
        let right = forward.cross(up);
        if right.norm() < T::of(1e-9) {
            return Err(Error::Config("camera cannot look straight up or down".into()));
        }
        let right = right.normalized();
        let down = forward.cross(right);
        // rows of R_wc are the camera axes expressed in world coordinates
        let rot = Quat::from_matrix([
            [right.x, right.y, right.z],
            [down.x, down.y, down.z],
            [forward.x, forward.y, forward.z],
        ]);
        let world_to_camera = Pose::new(-rot.rotate(eye), rot);
        let cam = Self {
            fx,
            fy,
            cx: width * T::of(0.5),
            cy: height * T::of(0.5),
            width,
            height,
            world_to_camera,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        if !(self.fx > z && self.fy > z) {
            return Err(Error::Config("focal lengths must be positive".into()));
        }
        if !(self.cx > z && self.cx < self.width && self.cy > z && self.cy < self.height) {
            return Err(Error::Config("principal point must lie inside the image".into()));
        }
        let n = self.world_to_camera.rotation.norm().as_f64();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::Config("camera rotation is not orthonormal".into()));
        }
        Ok(())
    }

    pub fn to_camera(&self, p_world: Vec3<T>) -> Vec3<T> {
        self.world_to_camera.transform_point(p_world)
    }

    /// Pixel coordinates of a camera-frame point.
    pub fn project_camera_point(&self, pc: Vec3<T>) -> Result<(T, T)> {
        if !(pc.z > T::of(MIN_DEPTH)) {
            return Err(Error::BehindCamera(pc.z.as_f64()));
        }
        Ok((self.fx * pc.x / pc.z + self.cx, self.fy * pc.y / pc.z + self.cy))
    }

    /// World point back-projected from a pixel at the given camera depth.
    pub fn back_project(&self, u: T, v: T, depth: T) -> Vec3<T> {
        let pc = Vec3::new((u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth);
        self.world_to_camera.inverse().transform_point(pc)
    }
}

/// Pixel coordinates of a world point.
pub fn project_point<T: Real>(cam: &CameraModel<T>, p_world: Vec3<T>) -> Result<(T, T)> {
    cam.project_camera_point(cam.to_camera(p_world))
}

/// Axis-aligned image box, corners in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BoundingBox<T: Real> {
    pub u_min: T,
    pub v_min: T,
    pub u_max: T,
    pub v_max: T,
}

impl<T: Real> BoundingBox<T> {
    pub fn width(&self) -> T {
        self.u_max - self.u_min
    }

    pub fn height(&self) -> T {
        self.v_max - self.v_min
    }

    pub fn center(&self) -> (T, T) {
        let half = T::of(0.5);
        ((self.u_min + self.u_max) * half, (self.v_min + self.v_max) * half)
    }

    pub fn is_valid(&self) -> bool {
        self.u_min <= self.u_max && self.v_min <= self.v_max
    }

    fn clipped(self, cam: &CameraModel<T>) -> Self {
        let z = T::zero();
        let cu = |x: T| x.max(z).min(cam.width);
        let cv = |x: T| x.max(z).min(cam.height);
        Self {
            u_min: cu(self.u_min),
            v_min: cv(self.v_min),
            u_max: cu(self.u_max),
            v_max: cv(self.v_max),
        }
    }
}

/// Tight box around the projections of the object's eight corners (the
/// ones in front of the camera), clipped to the image.
pub fn object_bounding_box<T: Real>(cam: &CameraModel<T>, obj: &ObjectState<T>) -> Result<BoundingBox<T>> {
    let mut bounds: Option<BoundingBox<T>> = None;
    for corner in obj.corners() {
        let Ok((u, v)) = project_point(cam, corner) else {
            continue;
        };
        bounds = Some(match bounds {
            None => BoundingBox {
                u_min: u,
                v_min: v,
                u_max: u,
                v_max: v,
            },
            Some(b) => BoundingBox {
                u_min: b.u_min.min(u),
                v_min: b.v_min.min(v),
                u_max: b.u_max.max(u),
                v_max: b.v_max.max(v),
            },
        });
    }
    bounds.map(|b| b.clipped(cam)).ok_or(Error::TrackingLost)
}

/// Shifts each corner coordinate by independent uniform noise in
/// `[-max_px, max_px]`, then re-orders and re-clips.
pub fn perturb_box<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    b: &BoundingBox<T>,
    max_px: T,
    cam: &CameraModel<T>,
) -> BoundingBox<T> {
    if max_px <= T::zero() {
        return *b;
    }
    let mut jitter = |x: T| {
        let u: f64 = rng.random();
        x + max_px * T::of(2.0 * u - 1.0)
    };
    let (a, c) = (jitter(b.u_min), jitter(b.u_max));
    let (d, e) = (jitter(b.v_min), jitter(b.v_max));
    BoundingBox {
        u_min: a.min(c),
        u_max: a.max(c),
        v_min: d.min(e),
        v_max: d.max(e),
    }
    .clipped(cam)
}

/// The six policy-facing features: box center and its per-step change,
/// plus per-step change in width and height.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PixelFeatures<T: Real> {
    pub cx: T,
    pub cy: T,
    pub dcx: T,
    pub dcy: T,
    pub dw: T,
    pub dh: T,
}

impl<T: Real> PixelFeatures<T> {
    pub const DIM: usize = 6;

    pub fn to_array(&self) -> [T; 6] {
        [self.cx, self.cy, self.dcx, self.dcy, self.dw, self.dh]
    }
}

/// Whether features are divided by the image size before reaching a policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureScaling {
    #[default]
    Normalized,
    Pixels,
}

impl FeatureScaling {
    /// `(sx, sy)` multipliers for horizontal and vertical quantities.
    pub fn factors<T: Real>(self, cam: &CameraModel<T>) -> (T, T) {
        match self {
            Self::Normalized => (T::one() / cam.width, T::one() / cam.height),
            Self::Pixels => (T::one(), T::one()),
        }
    }
}

pub fn extract_pixel_features<T: Real>(
    box_t: &BoundingBox<T>,
    box_prev: &BoundingBox<T>,
    cam: &CameraModel<T>,
    scaling: FeatureScaling,
) -> PixelFeatures<T> {
    let (sx, sy) = scaling.factors(cam);
    let (cx, cy) = box_t.center();
    let (px, py) = box_prev.center();
    PixelFeatures {
        cx: cx * sx,
        cy: cy * sy,
        dcx: (cx - px) * sx,
        dcy: (cy - py) * sy,
        dw: (box_t.width() - box_prev.width()) * sx,
        dh: (box_t.height() - box_prev.height()) * sy,
    }
}
