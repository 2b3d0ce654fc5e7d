//! Rotation and translation math, the parallel-jaw gripper model, the
//! pinhole camera, and region-frame transforms.
//!
//! Grasp frame convention: at `theta = beta = gamma = 0` the gripper closing
//! axis is camera `+x`, the finger-plane normal is camera `+y` and the
//! approach axis is camera `+z`. Orientation is composed in the camera frame
//! as `R = Rz(theta) * Ry(beta) * Rx(gamma)`, so the columns of `R` are the
//! closing, normal and approach axes respectively.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Isometry3, Matrix3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
/// Rigid transform; for a camera this maps camera coordinates to world.
pub type Pose = Isometry3<f64>;

/// Per-axis bound of the grasp offset from its patch center, in meters.
pub const OFFSET_LIMIT: f64 = 0.02;

const ANGLE_SLACK: f64 = 1e-12;

fn check_angle(name: &str, a: f64) -> Result<()> {
    if !a.is_finite() || a.abs() > FRAC_PI_2 + ANGLE_SLACK {
        return Err(Error::Range(format!("{name} = {a} outside [-pi/2, pi/2]")));
    }
    Ok(())
}

/// Rotation matrix for the grasp angles, `Rz(theta) * Ry(beta) * Rx(gamma)`.
pub fn euler_to_rotation(theta: f64, beta: f64, gamma: f64) -> Result<Mat3> {
    check_angle("theta", theta)?;
    check_angle("beta", beta)?;
    check_angle("gamma", gamma)?;
    Ok(euler_to_rotation_unchecked(theta, beta, gamma))
}

pub(crate) fn euler_to_rotation_unchecked(theta: f64, beta: f64, gamma: f64) -> Mat3 {
    let (st, ct) = theta.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let (sg, cg) = gamma.sin_cos();
    Mat3::new(
        ct * cb,
        ct * sb * sg - st * cg,
        ct * sb * cg + st * sg,
        st * cb,
        st * sb * sg + ct * cg,
        st * sb * cg - ct * sg,
        -sb,
        cb * sg,
        cb * cg,
    )
}

/// Inverse of [`euler_to_rotation`].
///
/// Fails with [`Error::Unrepresentable`] when the rotation needs `theta` or
/// `gamma` outside the half range (for example a half turn about the optical
/// axis).
pub fn rotation_to_euler(r: &Mat3) -> Result<(f64, f64, f64)> {
    let cb = r[(0, 0)].hypot(r[(1, 0)]);
    let beta = (-r[(2, 0)]).atan2(cb);
    let (theta, gamma) = if cb < 1e-12 {
        // Gimbal lock: only theta -/+ gamma is observable; pin gamma to 0.
        ((-r[(0, 1)]).atan2(r[(1, 1)]), 0.0)
    } else {
        (r[(1, 0)].atan2(r[(0, 0)]), r[(2, 1)].atan2(r[(2, 2)]))
    };
    let lim = FRAC_PI_2 + 1e-9;
    if theta.abs() > lim || gamma.abs() > lim {
        return Err(Error::Unrepresentable(format!(
            "theta={theta:.6}, beta={beta:.6}, gamma={gamma:.6}"
        )));
    }
    Ok((
        theta.clamp(-FRAC_PI_2, FRAC_PI_2),
        beta.clamp(-FRAC_PI_2, FRAC_PI_2),
        gamma.clamp(-FRAC_PI_2, FRAC_PI_2),
    ))
}

/// Geodesic distance between two rotations, in radians.
pub fn rotation_distance(a: &Mat3, b: &Mat3) -> f64 {
    let c = ((a.transpose() * b).trace() - 1.0) * 0.5;
    c.clamp(-1.0, 1.0).acos()
}

/// Angle between two vectors, radians in `[0, pi]`.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return std::f64::consts::PI;
    }
    // atan2 form stays accurate near 0 and pi.
    a.cross(b).norm().atan2(a.dot(b))
}

/// A 6-DoF parallel-jaw grasp in the camera frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    pub center: Vec3,
    pub theta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub width: f64,
    pub score: f64,
}

impl GraspPose {
    /// Builds a grasp from a closing axis and an approach direction.
    ///
    /// The approach is orthogonalized against the closing axis. Because a
    /// parallel gripper is symmetric under a half turn about its approach
    /// axis, the closing axis is flipped when that brings `theta` into range.
    pub fn from_axes(center: Vec3, closing: Vec3, approach: Vec3, width: f64, score: f64) -> Result<Self> {
        let x = closing
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Degenerate("zero closing axis".into()))?;
        let z = (approach - x * x.dot(&approach))
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Degenerate("approach parallel to closing axis".into()))?;
        let y = z.cross(&x);
        let r = Mat3::from_columns(&[x, y, z]);
        let (theta, beta, gamma) = match rotation_to_euler(&r) {
            Ok(a) => a,
            Err(_) => rotation_to_euler(&Mat3::from_columns(&[-x, -y, z]))?,
        };
        Ok(Self { center, theta, beta, gamma, width, score })
    }

    pub fn rotation(&self) -> Mat3 {
        euler_to_rotation_unchecked(self.theta, self.beta, self.gamma)
    }

    pub fn closing_axis(&self) -> Vec3 {
        self.rotation().column(0).into_owned()
    }

    pub fn normal_axis(&self) -> Vec3 {
        self.rotation().column(1).into_owned()
    }

    pub fn approach_axis(&self) -> Vec3 {
        self.rotation().column(2).into_owned()
    }

    /// Checks the angle, width and score invariants against a gripper.
    pub fn validate(&self, gripper: &GripperModel) -> Result<()> {
        check_angle("theta", self.theta)?;
        check_angle("beta", self.beta)?;
        check_angle("gamma", self.gamma)?;
        if !(0.0..=gripper.max_width + 1e-12).contains(&self.width) {
            return Err(Error::Range(format!("width {} outside [0, {}]", self.width, gripper.max_width)));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::Range(format!("score {} outside [0, 1]", self.score)));
        }
        if !self.center.iter().all(|c| c.is_finite()) {
            return Err(Error::Range("non-finite center".into()));
        }
        Ok(())
    }
}

/// A grasp relative to a region patch center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionGrasp {
    pub dt: Vec3,
    pub theta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub width: f64,
    pub score: f64,
}

impl RegionGrasp {
    pub fn validate(&self) -> Result<()> {
        if self.dt.iter().any(|c| !c.is_finite() || c.abs() > OFFSET_LIMIT) {
            return Err(Error::Range(format!("offset {:?} outside the +/-{OFFSET_LIMIT} m box", self.dt)));
        }
        check_angle("theta", self.theta)?;
        check_angle("beta", self.beta)?;
        check_angle("gamma", self.gamma)?;
        if !(self.width >= 0.0) {
            return Err(Error::Range(format!("negative width {}", self.width)));
        }
        Ok(())
    }
}

/// Lifts a region-frame grasp back to the camera frame.
pub fn region_to_camera_grasp(g: &RegionGrasp, patch_center: &Vec3) -> GraspPose {
    GraspPose {
        center: patch_center + g.dt,
        theta: g.theta,
        beta: g.beta,
        gamma: g.gamma,
        width: g.width,
        score: g.score,
    }
}

pub fn to_region_frame(points: &[Vec3], center: &Vec3) -> Vec<Vec3> {
    points.iter().map(|p| p - center).collect()
}

pub fn from_region_frame(points: &[Vec3], center: &Vec3) -> Vec<Vec3> {
    points.iter().map(|p| p + center).collect()
}

/// Pinhole camera. Pixel `(u, v)` has its center at integer coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Camera to world.
    pub pose: Pose,
}

/// Default camera height above the support plane for clutter scenes.
pub const DEFAULT_CAMERA_HEIGHT: f64 = 0.85;

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            fx: 600.0,
            fy: 600.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
            pose: top_down_pose(DEFAULT_CAMERA_HEIGHT),
        }
    }
}

/// Camera looking straight down at the world origin from `height` meters.
///
/// Camera `+x` is world `+x`, camera `+y` is world `-y`, camera `+z` is
/// world `-z`.
pub fn top_down_pose(height: f64) -> Pose {
    let rot = Mat3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    let q = UnitQuaternion::from_matrix(&rot);
    Isometry3::from_parts(Translation3::new(0.0, 0.0, height), q)
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config("focal lengths must be positive".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::Config("principal point outside the image".into()));
        }
        Ok(())
    }

    pub fn project(&self, p: &Vec3) -> Result<(f64, f64)> {
        project(p, self)
    }

    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Result<Vec3> {
        unproject(u, v, z, self)
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.pose.inverse_transform_point(&Point3::from(*p)).coords
    }

    pub fn camera_to_world(&self, p: &Vec3) -> Vec3 {
        self.pose.transform_point(&Point3::from(*p)).coords
    }

    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && v >= -0.5 && u < self.width as f64 - 0.5 && v < self.height as f64 - 0.5
    }

    /// Unit ray direction (camera frame) through pixel coordinates.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0).normalize()
    }
}

/// Pinhole projection `u = cx + fx x / z`, `v = cy + fy y / z`.
pub fn project(p: &Vec3, cam: &CameraModel) -> Result<(f64, f64)> {
    if !(p.z > 0.0) {
        return Err(Error::Domain(format!("cannot project point with depth {}", p.z)));
    }
    Ok((cam.cx + cam.fx * p.x / p.z, cam.cy + cam.fy * p.y / p.z))
}

pub fn unproject(u: f64, v: f64, z: f64, cam: &CameraModel) -> Result<Vec3> {
    if !(z > 0.0) {
        return Err(Error::Domain(format!("cannot unproject at depth {z}")));
    }
    Ok(Vec3::new((u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z))
}

/// Parallel-jaw gripper dimensions in meters.
///
/// In the grasp frame (x closing, y normal, z approach) each finger is a box
/// spanning `z in [-finger_depth, finger_thickness / 2]`,
/// `|y| <= finger_thickness` and `x` from `width / 2` to
/// `width / 2 + finger_thickness`. The palm sits directly behind the fingers:
/// `z in [-finger_depth - palm_depth, -finger_depth]`, `|x| <= palm_width / 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperModel {
    pub max_width: f64,
    pub finger_depth: f64,
    pub finger_thickness: f64,
    pub palm_depth: f64,
    pub palm_width: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        Self { max_width: 0.085, finger_depth: 0.04, finger_thickness: 0.01, palm_depth: 0.02, palm_width: 0.105 }
    }
}

/// Axis-aligned box in the grasp frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl FrameBox {
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.max_width, self.finger_depth, self.finger_thickness, self.palm_depth, self.palm_width];
        if dims.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Config("gripper dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Finger and palm boxes (grasp frame) for an opening `width`.
    pub fn boxes(&self, width: f64) -> [FrameBox; 3] {
        let h = width * 0.5;
        let t = self.finger_thickness;
        let z0 = -self.finger_depth;
        let z1 = 0.5 * t;
        [
            FrameBox { min: Vec3::new(-h - t, -t, z0), max: Vec3::new(-h, t, z1) },
            FrameBox { min: Vec3::new(h, -t, z0), max: Vec3::new(h + t, t, z1) },
            FrameBox {
                min: Vec3::new(-0.5 * self.palm_width, -t, z0 - self.palm_depth),
                max: Vec3::new(0.5 * self.palm_width, t, z0),
            },
        ]
    }

    /// Radius of a sphere around the grasp center enclosing every box.
    pub fn bounding_radius(&self, width: f64) -> f64 {
        let x = (0.5 * width + self.finger_thickness).max(0.5 * self.palm_width);
        let z = self.finger_depth + self.palm_depth;
        (x * x + z * z + self.finger_thickness * self.finger_thickness).sqrt()
    }

    /// True when any point lies inside a finger or the palm.
    pub fn collides<'a, I>(&self, grasp: &GraspPose, points: I) -> bool
    where
        I: IntoIterator<Item = &'a Vec3>,
    {
        let r = grasp.rotation();
        let rt = r.transpose();
        let boxes = self.boxes(grasp.width);
        let reach = self.bounding_radius(grasp.width);
        let reach2 = reach * reach;
        points.into_iter().any(|p| {
            let d = p - grasp.center;
            if d.norm_squared() > reach2 {
                return false;
            }
            let local = rt * d;
            boxes.iter().any(|b| b.contains(&local))
        })
    }

    /// Camera-frame polyline tracing the gripper: left tip, left base,
    /// right base, right tip, then the approach stem.
    pub fn outline(&self, grasp: &GraspPose) -> Vec<Vec3> {
        let r = grasp.rotation();
        let x = 0.5 * grasp.width + 0.5 * self.finger_thickness;
        let tip = 0.5 * self.finger_thickness;
        let base = -self.finger_depth;
        let local = [
            Vec3::new(-x, 0.0, tip),
            Vec3::new(-x, 0.0, base),
            Vec3::new(0.0, 0.0, base),
            Vec3::new(0.0, 0.0, base - self.palm_depth),
            Vec3::new(0.0, 0.0, base),
            Vec3::new(x, 0.0, base),
            Vec3::new(x, 0.0, tip),
        ];
        local.iter().map(|p| grasp.center + r * p).collect()
    }
}
