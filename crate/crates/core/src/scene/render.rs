use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::{unproject, CameraModel, Vec3};

use super::{Scene, Surface};

/// Object-id map value for the support plane and empty background.
pub const NO_OBJECT: u32 = u32::MAX;

const PLANE_COLOR: [f64; 3] = [0.55, 0.5, 0.45];

/// Row-major RGB-D render. `depth == 0` marks pixels without a hit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RgbdImage {
    pub width: u32,
    pub height: u32,
    /// Interleaved RGB in `[0, 1]`, `3 * width * height` values.
    pub rgb: Vec<f32>,
    pub depth: Vec<f64>,
    pub ids: Vec<u32>,
}

impl RgbdImage {
    pub fn empty(width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        Self { width, height, rgb: vec![0.0; 3 * n], depth: vec![0.0; n], ids: vec![NO_OBJECT; n] }
    }

    pub fn index(&self, u: u32, v: u32) -> usize {
        (v * self.width + u) as usize
    }

    pub fn depth_at(&self, u: u32, v: u32) -> f64 {
        self.depth[self.index(u, v)]
    }

    pub fn id_at(&self, u: u32, v: u32) -> u32 {
        self.ids[self.index(u, v)]
    }

    pub fn color_at(&self, u: u32, v: u32) -> [f32; 3] {
        let i = 3 * self.index(u, v);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    /// Boolean mask of the pixels owned by one object.
    pub fn object_mask(&self, id: u32) -> Vec<bool> {
        self.ids.iter().map(|&k| k == id).collect()
    }

    /// Visible pixel count per object id, sorted by id.
    pub fn visibility(&self) -> Vec<(u32, usize)> {
        let mut counts = std::collections::BTreeMap::new();
        for &k in &self.ids {
            if k != NO_OBJECT {
                *counts.entry(k).or_insert(0usize) += 1;
            }
        }
        counts.into_iter().collect()
    }
}

/// Ray-casts one sample per pixel center.
pub fn render(scene: &Scene) -> RgbdImage {
    let cam = &scene.camera;
    let (w, h) = (cam.width as usize, cam.height as usize);
    let origin = cam.camera_to_world(&Vec3::zeros());
    let rows: Vec<Vec<([f32; 3], f64, u32)>> = (0..h)
        .into_par_iter()
        .map(|v| {
            (0..w)
                .map(|u| {
                    let dir_cam = cam.pixel_ray(u as f64, v as f64);
                    let dir = cam.pose.rotation.transform_vector(&dir_cam);
                    match scene.raycast(&origin, &dir) {
                        None => ([0.0; 3], 0.0, NO_OBJECT),
                        Some(hit) => {
                            let (base, id) = match hit.surface {
                                Surface::Plane => (PLANE_COLOR, NO_OBJECT),
                                Surface::Object(k) => (scene.object(k).map_or([1.0; 3], |o| o.color), k),
                            };
                            let shade = 0.3 + 0.7 * hit.normal.dot(&-dir).abs();
                            let rgb = base.map(|c| (c * shade).clamp(0.0, 1.0) as f32);
                            (rgb, hit.distance * dir_cam.z, id)
                        }
                    }
                })
                .collect()
        })
        .collect();
    let mut img = RgbdImage::empty(cam.width, cam.height);
    for (v, row) in rows.into_iter().enumerate() {
        for (u, (rgb, d, id)) in row.into_iter().enumerate() {
            let i = v * w + u;
            img.rgb[3 * i..3 * i + 3].copy_from_slice(&rgb);
            img.depth[i] = d;
            img.ids[i] = id;
        }
    }
    if scene.depth_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed ^ 0x5eed_de97);
        let noise = Normal::new(0.0, scene.depth_noise).expect("finite sigma");
        for d in img.depth.iter_mut().filter(|d| **d > 0.0) {
            *d = (*d + noise.sample(&mut rng)).max(0.0);
        }
    }
    img
}

/// Camera-frame points with per-point color, owner id and source pixel.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub colors: Vec<[f32; 3]>,
    pub ids: Vec<u32>,
    pub pixels: Vec<(u32, u32)>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One point per valid-depth pixel, in row-major pixel order.
pub fn cloud_from_depth(img: &RgbdImage, cam: &CameraModel) -> PointCloud {
    let mut cloud = PointCloud::default();
    for v in 0..img.height {
        for u in 0..img.width {
            let i = img.index(u, v);
            let z = img.depth[i];
            if z > 0.0 {
                let p = unproject(u as f64, v as f64, z, cam).expect("positive depth");
                cloud.points.push(p);
                cloud.colors.push(img.color_at(u, v));
                cloud.ids.push(img.ids[i]);
                cloud.pixels.push((u, v));
            }
        }
    }
    cloud
}
