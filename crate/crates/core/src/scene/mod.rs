//! Synthetic tabletop scenes of primitive meshes and a ray-cast RGB-D
//! renderer.

mod bvh;
mod clutter;
mod mesh;
mod render;

use std::sync::Arc;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{CameraModel, Pose, Vec3};

pub use bvh::{intersect_brute_force, Bvh};
pub use clutter::{default_library, generate_clutter, LibraryItem, RestPose, WORKSPACE};
pub use mesh::{closest_point_on_triangle, make_primitive, ray_triangle, MeshHit, PrimitiveKind, TriangleMesh, MIN_SEGMENTS};
pub use render::{cloud_from_depth, render, PointCloud, RgbdImage, NO_OBJECT};

/// Geometry of a scene object, in its own frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Box { size: [f64; 3] },
    Cylinder { radius: f64, height: f64, segments: u32 },
    Sphere { radius: f64, segments: u32 },
    Mesh { mesh: TriangleMesh },
}

impl Shape {
    pub fn build(&self) -> Result<TriangleMesh> {
        match self {
            Shape::Box { size } => make_primitive(PrimitiveKind::Box, size, 0),
            Shape::Cylinder { radius, height, segments } => {
                make_primitive(PrimitiveKind::Cylinder, &[*radius, *height], *segments)
            }
            Shape::Sphere { radius, segments } => make_primitive(PrimitiveKind::Sphere, &[*radius], *segments),
            Shape::Mesh { mesh } => Ok(mesh.clone()),
        }
    }
}

/// Mesh plus its BVH; shared between scene snapshots.
#[derive(Debug)]
pub struct MeshData {
    pub mesh: TriangleMesh,
    pub bvh: Bvh,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ObjectRepr {
    id: u32,
    shape: Shape,
    pose: Pose,
    color: [f64; 3],
}

/// A posed, colored object. `pose` maps object coordinates to world.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ObjectRepr", into = "ObjectRepr")]
pub struct SceneObject {
    pub id: u32,
    pub shape: Shape,
    pub pose: Pose,
    pub color: [f64; 3],
    data: Arc<MeshData>,
    bound_center: Vec3,
    bound_radius: f64,
}

impl TryFrom<ObjectRepr> for SceneObject {
    type Error = Error;

    fn try_from(r: ObjectRepr) -> Result<Self> {
        SceneObject::new(r.id, r.shape, r.pose, r.color)
    }
}

impl From<SceneObject> for ObjectRepr {
    fn from(o: SceneObject) -> Self {
        ObjectRepr { id: o.id, shape: o.shape, pose: o.pose, color: o.color }
    }
}

impl PartialEq for SceneObject {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id && self.shape == other.shape && self.pose == other.pose && self.color == other.color
    }
}

impl SceneObject {
    pub fn new(id: u32, shape: Shape, pose: Pose, color: [f64; 3]) -> Result<Self> {
        let mesh = shape.build()?;
        let bvh = Bvh::build(&mesh);
        let bound_radius = mesh.bounding_radius();
        let bound_center = pose.translation.vector;
        Ok(Self { id, shape, pose, color, data: Arc::new(MeshData { mesh, bvh }), bound_center, bound_radius })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.data.mesh
    }

    /// Mesh vertices in world coordinates.
    pub fn world_vertices(&self) -> Vec<Vec3> {
        self.mesh().vertices.iter().map(|v| self.to_world(v)).collect()
    }

    pub fn to_world(&self, p: &Vec3) -> Vec3 {
        self.pose.transform_point(&Point3::from(*p)).coords
    }

    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        self.pose.inverse_transform_point(&Point3::from(*p)).coords
    }

    /// Distance from a world point to this object's surface.
    pub fn surface_distance(&self, p_world: &Vec3) -> f64 {
        self.mesh().distance_to_point(&self.to_local(p_world))
    }

    /// Nearest hit with a world-frame ray; returns distance and world normal
    /// (outward).
    fn intersect(&self, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<(f64, Vec3)> {
        // Bounding-sphere rejection.
        let oc = origin - self.bound_center;
        let b = oc.dot(dir);
        let c = oc.norm_squared() - self.bound_radius * self.bound_radius * (1.0 + 1e-9);
        if c > 0.0 && (b > 0.0 || b * b < c) {
            return None;
        }
        let lo = self.to_local(origin);
        let ld = self.pose.rotation.inverse_transform_vector(dir);
        let hit = self.data.bvh.intersect(&self.data.mesh, &lo, &ld, t_max)?;
        let n = self.pose.rotation.transform_vector(&self.data.mesh.normals[hit.triangle]);
        Some((hit.t, n))
    }
}

/// What a ray hit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    Object(u32),
    Plane,
}

impl Surface {
    pub fn object_id(&self) -> Option<u32> {
        match self {
            Surface::Object(id) => Some(*id),
            Surface::Plane => None,
        }
    }
}

/// Nearest ray hit. `normal` is unit length and faces against the ray;
/// `outward` is the geometric outward normal of the hit surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayHit {
    pub surface: Surface,
    pub distance: f64,
    pub point: Vec3,
    pub normal: Vec3,
    pub outward: Vec3,
}

/// Objects on the `z = 0` support plane, seen by one pinhole camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub camera: CameraModel,
    pub seed: u64,
    /// Standard deviation of additive Gaussian depth noise, meters.
    #[serde(default)]
    pub depth_noise: f64,
}

impl Scene {
    pub fn new(objects: Vec<SceneObject>, camera: CameraModel, seed: u64) -> Result<Self> {
        let s = Self { objects, camera, seed, depth_noise: 0.0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        let mut ids: Vec<u32> = self.objects.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate object ids".into()));
        }
        if ids.last() == Some(&NO_OBJECT) {
            return Err(Error::Config("object id collides with the background sentinel".into()));
        }
        for o in &self.objects {
            let min_z = o.world_vertices().iter().map(|v| v.z).fold(f64::INFINITY, f64::min);
            if min_z < -1e-9 {
                return Err(Error::Config(format!("object {} penetrates the support plane (min z {min_z})", o.id)));
            }
        }
        Ok(())
    }

    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Nearest intersection of a world-frame ray with any object or the plane.
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3) -> Option<RayHit> {
        let mut best: Option<(f64, Surface, Vec3)> = None;
        if (dir.z < 0.0 && origin.z > 0.0) || (dir.z > 0.0 && origin.z < 0.0) {
            best = Some((-origin.z / dir.z, Surface::Plane, Vec3::z()));
        }
        for o in &self.objects {
            let limit = best.map_or(f64::INFINITY, |b| b.0);
            if let Some((t, n)) = o.intersect(origin, dir, limit) {
                if t < limit || best.is_none_or(|b| b.1 == Surface::Plane && t <= limit) {
                    best = Some((t, Surface::Object(o.id), n));
                }
            }
        }
        best.map(|(t, surface, n)| {
            let facing = if n.dot(dir) > 0.0 { -n } else { n };
            RayHit { surface, distance: t, point: origin + dir * t, normal: facing, outward: n }
        })
    }

    /// Ray cast with origin and direction in the camera frame; the hit is
    /// reported in the camera frame too.
    pub fn raycast_camera(&self, origin: &Vec3, dir: &Vec3) -> Option<RayHit> {
        let o = self.camera.camera_to_world(origin);
        let d = self.camera.pose.rotation.transform_vector(dir);
        self.raycast(&o, &d).map(|h| RayHit {
            surface: h.surface,
            distance: h.distance,
            point: self.camera.world_to_camera(&h.point),
            normal: self.camera.pose.rotation.inverse_transform_vector(&h.normal),
            outward: self.camera.pose.rotation.inverse_transform_vector(&h.outward),
        })
    }

    /// Distance from a camera-frame point to an object's surface.
    pub fn surface_distance_camera(&self, id: u32, p_cam: &Vec3) -> Option<f64> {
        let w = self.camera.camera_to_world(p_cam);
        self.object(id).map(|o| o.surface_distance(&w))
    }

    /// Nearest object to a camera-frame point, with its surface distance.
    pub fn nearest_object_camera(&self, p_cam: &Vec3) -> Option<(u32, f64)> {
        let w = self.camera.camera_to_world(p_cam);
        self.objects
            .iter()
            .map(|o| (o.id, o.surface_distance(&w)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scene = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }
}

/// Posed object resting on the plane with its lowest vertex at `z = 0`.
pub fn rest_on_plane(id: u32, shape: Shape, rotation: nalgebra::UnitQuaternion<f64>, xy: [f64; 2], color: [f64; 3]) -> Result<SceneObject> {
    let mesh = shape.build()?;
    let min_z = mesh.vertices.iter().map(|v| (rotation * v).z).fold(f64::INFINITY, f64::min);
    let pose = Pose::from_parts(nalgebra::Translation3::new(xy[0], xy[1], -min_z), rotation);
    SceneObject::new(id, shape, pose, color)
}
