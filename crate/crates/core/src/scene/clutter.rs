use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::geom::CameraModel;

use super::{rest_on_plane, Scene, SceneObject, Shape};

/// Placement area `[x, y]` extents in meters, centered on the world origin.
pub const WORKSPACE: [f64; 2] = [0.8, 0.6];

const MIN_GAP: f64 = 0.002;
const MAX_ATTEMPTS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestPose {
    /// Object `z` axis vertical.
    Upright,
    /// Object `z` axis horizontal (rotated a quarter turn about `x`).
    Lying,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryItem {
    pub name: String,
    pub shape: Shape,
    pub rest: RestPose,
    pub color: [f64; 3],
}

impl LibraryItem {
    fn new(name: &str, shape: Shape, rest: RestPose, color: [f64; 3]) -> Self {
        Self { name: name.into(), shape, rest, color }
    }
}

/// Small graspable primitives sized for the default gripper.
pub fn default_library() -> Vec<LibraryItem> {
    use RestPose::*;
    vec![
        LibraryItem::new("ball", Shape::Sphere { radius: 0.019, segments: 24 }, Upright, [0.85, 0.2, 0.15]),
        LibraryItem::new("can", Shape::Cylinder { radius: 0.019, height: 0.08, segments: 24 }, Upright, [0.2, 0.45, 0.8]),
        LibraryItem::new("roller", Shape::Cylinder { radius: 0.018, height: 0.12, segments: 24 }, Lying, [0.9, 0.75, 0.2]),
        LibraryItem::new("block", Shape::Box { size: [0.035, 0.05, 0.05] }, Upright, [0.3, 0.7, 0.3]),
        LibraryItem::new("bar", Shape::Box { size: [0.03, 0.12, 0.03] }, Upright, [0.6, 0.3, 0.7]),
        LibraryItem::new("carton", Shape::Box { size: [0.10, 0.07, 0.05] }, Upright, [0.8, 0.55, 0.35]),
        LibraryItem::new("cube", Shape::Box { size: [0.045, 0.045, 0.045] }, Upright, [0.25, 0.75, 0.75]),
    ]
}

fn rest_rotation(rest: RestPose) -> UnitQuaternion<f64> {
    match rest {
        RestPose::Upright => UnitQuaternion::identity(),
        RestPose::Lying => UnitQuaternion::from_axis_angle(&Vector3::x_axis(), FRAC_PI_2),
    }
}

fn footprint_radius(o: &SceneObject) -> f64 {
    let c = o.pose.translation.vector;
    o.world_vertices().iter().map(|v| (v.xy() - c.xy()).norm()).fold(0.0, f64::max)
}

/// Seeded clutter: `n_objects` library items with random yaw, resting on the
/// plane, with footprint circles at least 2 mm apart.
pub fn generate_clutter(seed: u64, n_objects: usize, library: &[LibraryItem], camera: CameraModel) -> Result<Scene> {
    if library.is_empty() {
        return Err(Error::Config("empty object library".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placed: Vec<(SceneObject, f64)> = Vec::with_capacity(n_objects);
    for id in 0..n_objects as u32 {
        let item = &library[rng.random_range(0..library.len())];
        let mut ok = None;
        for _ in 0..MAX_ATTEMPTS {
            let yaw = rng.random_range(-PI..PI);
            let x = rng.random_range(-0.5..0.5) * WORKSPACE[0];
            let y = rng.random_range(-0.5..0.5) * WORKSPACE[1];
            let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw) * rest_rotation(item.rest);
            let obj = rest_on_plane(id, item.shape.clone(), rot, [x, y], item.color)?;
            let r = footprint_radius(&obj);
            let inside = x.abs() + r <= 0.5 * WORKSPACE[0] && y.abs() + r <= 0.5 * WORKSPACE[1];
            let clear = placed.iter().all(|(o, ro)| {
                let d = (o.pose.translation.vector.xy() - obj.pose.translation.vector.xy()).norm();
                d > r + ro + MIN_GAP
            });
            if inside && clear {
                ok = Some((obj, r));
                break;
            }
        }
        match ok {
            Some(p) => placed.push(p),
            None => return Err(Error::Placement(format!("object {id} not placed after {MAX_ATTEMPTS} attempts"))),
        }
    }
    Scene::new(placed.into_iter().map(|(o, _)| o).collect(), camera, seed)
}
