//! Human guidance (clicks, masks, pointing rays) to region centers, and
//! multimodal region patch extraction.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{project, unproject, CameraModel, Vec3};
use crate::scene::{PointCloud, RgbdImage, NO_OBJECT};

pub const DEFAULT_WINDOW: f64 = 0.08;
pub const DEFAULT_PATCH_SIZE: usize = 32;
pub const DEFAULT_RADIUS: f64 = 0.02;
pub const DEFAULT_CENTERS: usize = 8;
pub const DEFAULT_CONE_RADIUS: f64 = 0.01;
/// Minimum fraction of valid pixels in a patch.
pub const MIN_VALID_FRACTION: f64 = 0.25;
/// Largest depth difference between bilinear neighbors, meters.
const MAX_BILINEAR_SPREAD: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceSource {
    Click,
    Mask,
    Pointing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidanceResult {
    /// Region centers in the camera frame.
    pub centers: Vec<Vec3>,
    pub source: GuidanceSource,
    pub confidence: f64,
}

/// Pixel with valid depth that belongs to an object, not the support plane.
fn is_target_pixel(img: &RgbdImage, i: usize) -> bool {
    img.depth[i] > 0.0 && img.ids[i] != NO_OBJECT
}

fn pixel_point(img: &RgbdImage, cam: &CameraModel, i: usize) -> Vec3 {
    let (u, v) = (i as u32 % img.width, i as u32 / img.width);
    unproject(u as f64, v as f64, img.depth[i], cam).expect("valid depth")
}

fn check_image(img: &RgbdImage, cam: &CameraModel) -> Result<()> {
    if img.width != cam.width || img.height != cam.height {
        return Err(Error::Format(format!(
            "image {}x{} does not match camera {}x{}",
            img.width, img.height, cam.width, cam.height
        )));
    }
    Ok(())
}

/// `first` followed by up to `k - 1` distinct object points within `radius`
/// of it, drawn uniformly.
fn sample_neighborhood(first: Vec3, first_pixel: Option<usize>, img: &RgbdImage, cam: &CameraModel, k: usize, radius: f64, seed: u64) -> Vec<Vec3> {
    let mut pool = Vec::new();
    for i in 0..img.depth.len() {
        if Some(i) == first_pixel || !is_target_pixel(img, i) {
            continue;
        }
        let p = pixel_point(img, cam, i);
        if (p - first).norm() <= radius {
            pool.push(p);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (k.saturating_sub(1)).min(pool.len());
    let mut centers = vec![first];
    centers.extend(index::sample(&mut rng, pool.len(), n).into_iter().map(|j| pool[j]));
    centers
}

/// Region centers around a clicked pixel.
///
/// The clicked pixel must hit an object; when it does not, the nearest object
/// pixel in its 5x5 neighborhood is used instead.
pub fn click_to_centers(u: f64, v: f64, img: &RgbdImage, cam: &CameraModel, k: usize, radius: f64, seed: u64) -> Result<GuidanceResult> {
    check_image(img, cam)?;
    if k == 0 {
        return Err(Error::Range("k must be at least 1".into()));
    }
    if !u.is_finite() || !v.is_finite() || !cam.contains_pixel(u, v) {
        return Err(Error::Range(format!("click ({u}, {v}) outside the {}x{} image", img.width, img.height)));
    }
    let (pu, pv) = (u.round() as i64, v.round() as i64);
    let mut best: Option<(i64, usize)> = None;
    for dv in -2..=2i64 {
        for du in -2..=2i64 {
            let (x, y) = (pu + du, pv + dv);
            if x < 0 || y < 0 || x >= img.width as i64 || y >= img.height as i64 {
                continue;
            }
            let i = img.index(x as u32, y as u32);
            let d2 = du * du + dv * dv;
            if is_target_pixel(img, i) && best.is_none_or(|(b, _)| d2 < b) {
                best = Some((d2, i));
            }
        }
    }
    let (d2, i) = best.ok_or_else(|| Error::NoTarget(format!("no object depth at or around pixel ({pu}, {pv})")))?;
    let first = pixel_point(img, cam, i);
    let centers = sample_neighborhood(first, Some(i), img, cam, k, radius, seed);
    Ok(GuidanceResult { centers, source: GuidanceSource::Click, confidence: if d2 == 0 { 1.0 } else { 0.5 } })
}

/// `k` distinct masked pixels with valid depth, drawn uniformly.
pub fn mask_to_centers(mask: &[bool], img: &RgbdImage, cam: &CameraModel, k: usize, seed: u64) -> Result<GuidanceResult> {
    check_image(img, cam)?;
    if mask.len() != img.depth.len() {
        return Err(Error::Format(format!("mask has {} pixels, image has {}", mask.len(), img.depth.len())));
    }
    let masked = mask.iter().filter(|&&m| m).count();
    let usable: Vec<usize> = (0..mask.len()).filter(|&i| mask[i] && img.depth[i] > 0.0).collect();
    if usable.is_empty() {
        return Err(Error::NoTarget("mask has no pixel with valid depth".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = k.min(usable.len());
    let centers = index::sample(&mut rng, usable.len(), n).into_iter().map(|j| pixel_point(img, cam, usable[j])).collect();
    Ok(GuidanceResult { centers, source: GuidanceSource::Mask, confidence: usable.len() as f64 / masked as f64 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
}

/// Total-least-squares line through pointing keypoints, oriented from the
/// first keypoint toward the last.
pub fn fit_pointing_ray(keypoints: &[Vec3]) -> Result<Ray> {
    if keypoints.len() < 2 {
        return Err(Error::Degenerate("need at least two keypoints".into()));
    }
    let first = keypoints[0];
    if keypoints.iter().all(|p| (p - first).norm() <= 1e-6) {
        return Err(Error::Degenerate("keypoints coincide".into()));
    }
    let n = keypoints.len();
    let centroid = keypoints.iter().sum::<Vec3>() / n as f64;
    let m = DMatrix::from_fn(n, 3, |r, c| keypoints[r][c] - centroid[c]);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let best = (0..svd.singular_values.len())
        .max_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]).then(b.cmp(&a)))
        .expect("non-empty");
    let mut dir = Vec3::new(v_t[(best, 0)], v_t[(best, 1)], v_t[(best, 2)]).normalize();
    if dir.dot(&(keypoints[n - 1] - first)) < 0.0 {
        dir = -dir;
    }
    Ok(Ray { origin: centroid, direction: dir })
}

/// Cloud point inside the ray's forward cone that is nearest to the origin.
pub fn ray_to_target(ray: &Ray, cloud: &[Vec3], cone_radius: f64) -> Result<Vec3> {
    let mut best: Option<(f64, Vec3)> = None;
    for p in cloud {
        let rel = p - ray.origin;
        let along = rel.dot(&ray.direction);
        if along <= 0.0 {
            continue;
        }
        let perp = (rel - ray.direction * along).norm();
        if perp <= cone_radius {
            let d = rel.norm();
            if best.is_none_or(|(b, _)| d < b) {
                best = Some((d, *p));
            }
        }
    }
    best.map(|b| b.1).ok_or_else(|| Error::NoTarget(format!("no cloud point within {cone_radius} m of the pointing ray")))
}

/// Region centers from pointing keypoints: fit a ray, hit the object cloud,
/// then sample the hit's neighborhood like a click.
#[allow(clippy::too_many_arguments)]
pub fn pointing_to_centers(
    keypoints: &[Vec3],
    img: &RgbdImage,
    cloud: &PointCloud,
    cam: &CameraModel,
    k: usize,
    radius: f64,
    cone_radius: f64,
    seed: u64,
) -> Result<GuidanceResult> {
    check_image(img, cam)?;
    let ray = fit_pointing_ray(keypoints)?;
    let objects: Vec<Vec3> = cloud.points.iter().zip(&cloud.ids).filter(|(_, &id)| id != NO_OBJECT).map(|(p, _)| *p).collect();
    let hit = ray_to_target(&ray, &objects, cone_radius)?;
    let pixel = cloud.points.iter().position(|p| *p == hit).map(|j| {
        let (u, v) = cloud.pixels[j];
        img.index(u, v)
    });
    let perp = (hit - ray.origin - ray.direction * (hit - ray.origin).dot(&ray.direction)).norm();
    let centers = sample_neighborhood(hit, pixel, img, cam, k, radius, seed);
    Ok(GuidanceResult { centers, source: GuidanceSource::Pointing, confidence: 1.0 - perp / cone_radius.max(f64::MIN_POSITIVE) })
}

/// Binary image mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

#[derive(Deserialize)]
struct RleMask {
    width: u32,
    height: u32,
    counts: Vec<u64>,
}

impl Mask {
    pub fn from_image_ids(img: &RgbdImage, id: u32) -> Self {
        Self { width: img.width, height: img.height, data: img.object_mask(id) }
    }

    /// Binary PGM (`P5`, maxval <= 255); nonzero samples are set.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("PGM: {m}"));
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?.to_string());
        }
        if fields[0] != "P5" {
            return Err(bad("expected P5 magic"));
        }
        let num = |s: &str| s.parse::<u32>().map_err(|_| bad("bad header number"));
        let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(bad("only 8-bit PGM is supported"));
        }
        pos += 1;
        let n = width as usize * height as usize;
        let body = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated pixel data"))?;
        Ok(Self { width, height, data: body.iter().map(|&b| b != 0).collect() })
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|&b| if b { 255u8 } else { 0 }));
        out
    }

    /// Run-length JSON `{"width", "height", "counts"}`: alternating run
    /// lengths in row-major order, starting with unset pixels.
    pub fn from_rle_json(text: &str) -> Result<Self> {
        let rle: RleMask = serde_json::from_str(text)?;
        let n = rle.width as usize * rle.height as usize;
        let mut data = Vec::with_capacity(n);
        for (j, &c) in rle.counts.iter().enumerate() {
            if data.len() + c as usize > n {
                return Err(Error::Format("RLE runs exceed image size".into()));
            }
            data.extend(std::iter::repeat_n(j % 2 == 1, c as usize));
        }
        if data.len() != n {
            return Err(Error::Format(format!("RLE covers {} of {n} pixels", data.len())));
        }
        Ok(Self { width: rle.width, height: rle.height, data })
    }

    pub fn to_rle_json(&self) -> String {
        let mut counts = Vec::new();
        let mut cur = false;
        let mut run = 0u64;
        for &b in &self.data {
            if b != cur {
                counts.push(run);
                run = 0;
                cur = b;
            }
            run += 1;
        }
        counts.push(run);
        serde_json::json!({ "width": self.width, "height": self.height, "counts": counts }).to_string()
    }

    /// Accepts either encoding, sniffing the PGM magic.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.starts_with(b"P5") {
            Self::from_pgm(bytes)
        } else {
            Self::from_rle_json(std::str::from_utf8(bytes).map_err(|_| Error::Format("mask is neither PGM nor UTF-8 JSON".into()))?)
        }
    }
}

/// Keypoints as a JSON array of `[x, y, z]` meters.
pub fn parse_keypoints(text: &str) -> Result<Vec<Vec3>> {
    let pts: Vec<[f64; 3]> = serde_json::from_str(text)?;
    Ok(pts.into_iter().map(Vec3::from).collect())
}

/// Six-channel local crop around a region center.
///
/// `maps` is channel-major `[R, G, B, X, Y, Z]`, each `size x size` row-major.
/// X/Y/Z are camera-frame coordinates minus `center3d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionPatch {
    pub center3d: Vec3,
    pub center_pixel: (f64, f64),
    pub size: usize,
    pub maps: Vec<f32>,
    pub valid: Vec<bool>,
    pub metric_window: f64,
    /// Side of the cropped pixel square in the source image.
    pub crop_side: f64,
    /// Source camera intrinsics `[fx, fy, cx, cy]`.
    pub intrinsics: [f64; 4],
}

pub const CH_R: usize = 0;
pub const CH_X: usize = 3;
pub const CH_Y: usize = 4;
pub const CH_Z: usize = 5;

impl RegionPatch {
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.maps[(channel * self.size + row) * self.size + col]
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[row * self.size + col]
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid.iter().filter(|&&b| b).count() as f64 / self.valid.len() as f64
    }

    /// Region-frame point stored at a pixel, if valid.
    pub fn point(&self, row: usize, col: usize) -> Option<Vec3> {
        self.is_valid(row, col).then(|| {
            Vec3::new(self.get(CH_X, row, col) as f64, self.get(CH_Y, row, col) as f64, self.get(CH_Z, row, col) as f64)
        })
    }

    /// Valid pixels as `(row, col, region-frame point)`.
    pub fn points(&self) -> Vec<(usize, usize, Vec3)> {
        let mut out = Vec::new();
        for r in 0..self.size {
            for c in 0..self.size {
                if let Some(p) = self.point(r, c) {
                    out.push((r, c, p));
                }
            }
        }
        out
    }

    /// Continuous patch coordinates `(row, col)` of a region-frame point.
    pub fn pixel_of(&self, p: &Vec3) -> Option<(f64, f64)> {
        let q = p + self.center3d;
        if q.z <= 0.0 {
            return None;
        }
        let [fx, fy, cx, cy] = self.intrinsics;
        let u = cx + fx * q.x / q.z;
        let v = cy + fy * q.y / q.z;
        let s = self.size as f64 / self.crop_side;
        let half = (self.size / 2) as f64;
        Some(((v - self.center_pixel.1) * s + half, (u - self.center_pixel.0) * s + half))
    }

    /// Camera-frame line of sight through continuous patch coordinates,
    /// returned as a region-frame point at camera depth `z`.
    pub fn unproject(&self, row: f64, col: f64, z: f64) -> Vec3 {
        let [fx, fy, cx, cy] = self.intrinsics;
        let half = (self.size / 2) as f64;
        let step = self.crop_side / self.size as f64;
        let u = self.center_pixel.0 + (col - half) * step;
        let v = self.center_pixel.1 + (row - half) * step;
        Vec3::new((u - cx) * z / fx, (v - cy) * z / fy, z) - self.center3d
    }

    /// Zeroes channel groups to mimic missing modalities.
    pub fn ablate(&mut self, drop_color: bool, drop_position: bool) {
        let n = self.size * self.size;
        if drop_color {
            self.maps[0..3 * n].iter_mut().for_each(|x| *x = 0.0);
        }
        if drop_position {
            self.maps[3 * n..5 * n].iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

struct Sample {
    depth: f64,
    rgb: [f64; 3],
}

fn sample_image(img: &RgbdImage, u: f64, v: f64) -> Option<Sample> {
    let (w, h) = (img.width as i64, img.height as i64);
    let (u0, v0) = (u.floor() as i64, v.floor() as i64);
    let (fu, fv) = (u - u0 as f64, v - v0 as f64);
    let at = |x: i64, y: i64| -> Option<usize> {
        (x >= 0 && y >= 0 && x < w && y < h).then(|| img.index(x as u32, y as u32)).filter(|&i| img.depth[i] > 0.0)
    };
    let corners = [at(u0, v0), at(u0 + 1, v0), at(u0, v0 + 1), at(u0 + 1, v0 + 1)];
    if corners.iter().all(Option::is_some) {
        let idx = corners.map(|c| c.unwrap());
        let ds = idx.map(|i| img.depth[i]);
        let lo = ds.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo <= MAX_BILINEAR_SPREAD {
            let wts = [(1.0 - fu) * (1.0 - fv), fu * (1.0 - fv), (1.0 - fu) * fv, fu * fv];
            let mut depth = 0.0;
            let mut rgb = [0.0; 3];
            for (k, &i) in idx.iter().enumerate() {
                depth += wts[k] * img.depth[i];
                for (c, x) in rgb.iter_mut().enumerate() {
                    *x += wts[k] * img.rgb[3 * i + c] as f64;
                }
            }
            return Some(Sample { depth, rgb });
        }
    }
    let i = at(u.round() as i64, v.round() as i64)?;
    Some(Sample { depth: img.depth[i], rgb: [0, 1, 2].map(|c| img.rgb[3 * i + c] as f64) })
}

/// Crops a metric window around `center3d` and resamples it to
/// `out_size x out_size`.
///
/// Output pixel `j` samples source coordinate `c + (j - out_size / 2) * side /
/// out_size`, so pixel `(out_size / 2, out_size / 2)` sits exactly on the
/// projected center.
pub fn extract_patch(img: &RgbdImage, cam: &CameraModel, center3d: &Vec3, metric_window: f64, out_size: usize) -> Result<RegionPatch> {
    check_image(img, cam)?;
    if !(metric_window > 0.0) || out_size == 0 {
        return Err(Error::Range("window and output size must be positive".into()));
    }
    let (uc, vc) = project(center3d, cam).map_err(|e| Error::Patch(e.to_string()))?;
    if !cam.contains_pixel(uc, vc) {
        return Err(Error::Patch(format!("center projects to ({uc:.1}, {vc:.1}), outside the image")));
    }
    let side = cam.fx * metric_window / center3d.z;
    let step = side / out_size as f64;
    let half = (out_size / 2) as f64;
    let n = out_size * out_size;
    let mut maps = vec![0.0f32; 6 * n];
    let mut valid = vec![false; n];
    for row in 0..out_size {
        let v = vc + (row as f64 - half) * step;
        for col in 0..out_size {
            let u = uc + (col as f64 - half) * step;
            let Some(s) = sample_image(img, u, v) else { continue };
            let p = unproject(u, v, s.depth, cam)? - center3d;
            let j = row * out_size + col;
            valid[j] = true;
            for c in 0..3 {
                maps[c * n + j] = s.rgb[c] as f32;
                maps[(3 + c) * n + j] = p[c] as f32;
            }
        }
    }
    let patch = RegionPatch {
        center3d: *center3d,
        center_pixel: (uc, vc),
        size: out_size,
        maps,
        valid,
        metric_window,
        crop_side: side,
        intrinsics: [cam.fx, cam.fy, cam.cx, cam.cy],
    };
    if patch.valid_fraction() < MIN_VALID_FRACTION {
        return Err(Error::Patch(format!("only {:.0}% of patch pixels valid", 100.0 * patch.valid_fraction())));
    }
    Ok(patch)
}

/// Patches for every center that yields one, with the indices of those that
/// failed.
pub fn extract_patches(img: &RgbdImage, cam: &CameraModel, centers: &[Vec3], metric_window: f64, out_size: usize) -> (Vec<RegionPatch>, Vec<usize>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (i, c) in centers.iter().enumerate() {
        match extract_patch(img, cam, c, metric_window, out_size) {
            Ok(p) => ok.push(p),
            Err(_) => failed.push(i),
        }
    }
    (ok, failed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::top_down_pose;
    use crate::scene::{render, rest_on_plane, Scene, Shape};
    use nalgebra::UnitQuaternion;

    fn sphere_scene() -> (Scene, RgbdImage) {
        let cam = CameraModel { pose: top_down_pose(0.53), ..Default::default() };
        let s = rest_on_plane(0, Shape::Sphere { radius: 0.03, segments: 32 }, UnitQuaternion::identity(), [0.0, 0.0], [0.8, 0.2, 0.2]).unwrap();
        let scene = Scene::new(vec![s], cam, 0).unwrap();
        let img = render(&scene);
        (scene, img)
    }

    #[test]
    fn click_principal_pixel_hits_sphere_top() {
        let (scene, img) = sphere_scene();
        let g = click_to_centers(320.0, 240.0, &img, &scene.camera, 1, 0.02, 0).unwrap();
        assert_eq!(g.centers.len(), 1);
        assert!((g.centers[0] - Vec3::new(0.0, 0.0, 0.47)).norm() < 1e-9);
    }

    #[test]
    fn click_neighbors_within_radius() {
        let (scene, img) = sphere_scene();
        let g = click_to_centers(322.0, 238.0, &img, &scene.camera, 8, 0.02, 5).unwrap();
        assert_eq!(g.centers.len(), 8);
        for c in &g.centers {
            assert!((c - g.centers[0]).norm() <= 0.02);
        }
    }

    #[test]
    fn click_on_background_is_no_target() {
        let (scene, img) = sphere_scene();
        let e = click_to_centers(10.0, 10.0, &img, &scene.camera, 4, 0.02, 0).unwrap_err();
        assert_eq!(e.kind(), "no-target");
        let e = click_to_centers(-5.0, 10.0, &img, &scene.camera, 4, 0.02, 0).unwrap_err();
        assert_eq!(e.kind(), "range");
    }

    #[test]
    fn single_pixel_mask_yields_one_center() {
        let (scene, img) = sphere_scene();
        let mut mask = vec![false; img.depth.len()];
        mask[img.index(320, 240)] = true;
        let g = mask_to_centers(&mask, &img, &scene.camera, 3, 1).unwrap();
        assert_eq!(g.centers.len(), 1);
        assert!(mask_to_centers(&vec![false; mask.len()], &img, &scene.camera, 3, 1).is_err());
    }

    #[test]
    fn collinear_keypoints_fit_exactly() {
        let d = Vec3::new(1.0, 2.0, -0.5).normalize();
        let o = Vec3::new(0.1, -0.2, 0.3);
        let pts: Vec<Vec3> = [0.0, 0.02, 0.05, 0.09].iter().map(|t| o + d * *t).collect();
        let ray = fit_pointing_ray(&pts).unwrap();
        assert!((ray.direction - d).norm() < 1e-12);
        let rev: Vec<Vec3> = pts.iter().rev().cloned().collect();
        assert!((fit_pointing_ray(&rev).unwrap().direction + d).norm() < 1e-12);
        assert_eq!(fit_pointing_ray(&[o, o, o]).unwrap_err().kind(), "degenerate");
    }

    #[test]
    fn ray_picks_nearest_in_cone() {
        let ray = Ray { origin: Vec3::zeros(), direction: Vec3::z() };
        let cloud = [Vec3::new(0.0, 0.0, 0.8), Vec3::new(0.005, 0.0, 0.4), Vec3::new(0.0, 0.0, -0.1), Vec3::new(0.05, 0.0, 0.2)];
        assert_eq!(ray_to_target(&ray, &cloud, 0.01).unwrap(), cloud[1]);
        assert_eq!(ray_to_target(&ray, &cloud[2..], 0.01).unwrap_err().kind(), "no-target");
    }

    #[test]
    fn crop_side_formula() {
        let cam = CameraModel { pose: top_down_pose(0.5), ..Default::default() };
        let scene = Scene::new(vec![], cam, 0).unwrap();
        let img = render(&scene);
        let p = extract_patch(&img, &scene.camera, &Vec3::new(0.0, 0.0, 0.5), 0.08, 32).unwrap();
        assert!((p.crop_side - 96.0).abs() < 1e-12);
        assert_eq!(p.valid_fraction(), 1.0);
        for (_, _, q) in p.points() {
            assert!(q.z.abs() < 1e-4);
        }
    }

    #[test]
    fn patch_center_is_region_origin() {
        let (scene, img) = sphere_scene();
        let g = click_to_centers(331.0, 247.0, &img, &scene.camera, 1, 0.02, 0).unwrap();
        let p = extract_patch(&img, &scene.camera, &g.centers[0], 0.08, 32).unwrap();
        let c = p.point(16, 16).unwrap();
        assert!(c.norm() < 1e-4);
        let (r, col) = p.pixel_of(&Vec3::zeros()).unwrap();
        assert!((r - 16.0).abs() < 1e-9 && (col - 16.0).abs() < 1e-9);
    }

    #[test]
    fn masks_roundtrip_both_encodings() {
        let m = Mask { width: 5, height: 2, data: vec![false, true, true, false, false, true, true, true, false, true] };
        assert_eq!(Mask::parse(&m.to_pgm()).unwrap(), m);
        assert_eq!(Mask::parse(m.to_rle_json().as_bytes()).unwrap(), m);
        assert!(Mask::from_rle_json(r#"{"width":2,"height":2,"counts":[1,1]}"#).is_err());
    }
}
