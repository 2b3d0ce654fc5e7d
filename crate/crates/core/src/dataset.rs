//! Region-focal dataset generation: analytic grasp labels, heatmap-based
//! center sampling, patch/label records and their on-disk format.

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{find_contacts, force_closure, SceneCollider, COLLISION_SPACING, DEFAULT_MU_SET};
use crate::geom::{CameraModel, GraspPose, GripperModel, RegionGrasp, Vec3, OFFSET_LIMIT};
use crate::guidance::{extract_patch, RegionPatch};
use crate::scene::{render, RgbdImage, Scene, SceneObject, Shape, Surface};

pub const FORMAT_VERSION: u32 = 1;
pub const RECORDS_FILE: &str = "records.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Friction coefficient at which label quality reaches zero.
const QUALITY_MU: f64 = 1.1;

/// An annotated camera-frame grasp. `pose.score` equals `quality`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspLabel {
    pub pose: GraspPose,
    pub quality: f64,
    pub object: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub gripper: GripperModel,
    pub width_margin: f64,
    pub mu_set: Vec<f64>,
    /// Closing axes sampled over the hemisphere for spheres.
    pub sphere_axes: usize,
    /// Closing axes around a cylinder's axis (over a half turn).
    pub cylinder_axes: usize,
    /// Approach directions sampled around each closing axis.
    pub approach_steps: usize,
    /// Center offsets along faces and axes, as fractions of the extent.
    pub offsets: Vec<f64>,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            gripper: GripperModel::default(),
            width_margin: 0.01,
            mu_set: DEFAULT_MU_SET.to_vec(),
            sphere_axes: 24,
            cylinder_axes: 12,
            approach_steps: 12,
            offsets: vec![-0.25, 0.0, 0.25],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub labels: Vec<GraspLabel>,
    /// `(object id, label count)` in object order.
    pub per_object: Vec<(u32, usize)>,
    /// Objects that received no label.
    pub unlabeled: Vec<u32>,
}

/// A grasp candidate in object coordinates.
struct LocalGrasp {
    center: Vec3,
    closing: Vec3,
    approach: Vec3,
    width: f64,
}

/// Unit vectors spanning the plane perpendicular to `n`.
fn perpendicular_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let t1 = n.cross(&helper).normalize();
    (t1, n.cross(&t1))
}

/// Approaches spread over the full turn around `closing`.
fn around(closing: &Vec3, steps: usize) -> Vec<Vec3> {
    let (t1, t2) = perpendicular_basis(closing);
    (0..steps)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / steps as f64;
            t1 * a.cos() + t2 * a.sin()
        })
        .collect()
}

/// Fibonacci points on the upper unit hemisphere.
fn hemisphere(n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            Vec3::new(r * a.cos(), r * a.sin(), z)
        })
        .collect()
}

fn local_candidates(shape: &Shape, cfg: &LabelConfig) -> Vec<LocalGrasp> {
    let max_w = cfg.gripper.max_width;
    let mut out = Vec::new();
    let mut push_all = |center: Vec3, closing: Vec3, gap: f64| {
        if gap > max_w {
            return;
        }
        let width = (gap + cfg.width_margin).min(max_w);
        for approach in around(&closing, cfg.approach_steps) {
            out.push(LocalGrasp { center, closing, approach, width });
        }
    };
    match shape {
        Shape::Sphere { radius, .. } => {
            for axis in hemisphere(cfg.sphere_axes) {
                push_all(Vec3::zeros(), axis, 2.0 * radius);
            }
        }
        Shape::Box { size } => {
            for i in 0..3 {
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                for &a in &cfg.offsets {
                    for &b in &cfg.offsets {
                        let mut c = Vec3::zeros();
                        c[j] = a * size[j];
                        c[k] = b * size[k];
                        let mut axis = Vec3::zeros();
                        axis[i] = 1.0;
                        push_all(c, axis, size[i]);
                    }
                }
            }
        }
        Shape::Cylinder { radius, height, .. } => {
            for s in 0..cfg.cylinder_axes {
                let a = PI * s as f64 / cfg.cylinder_axes as f64;
                let axis = Vec3::new(a.cos(), a.sin(), 0.0);
                for &f in &cfg.offsets {
                    push_all(Vec3::new(0.0, 0.0, f * height), axis, 2.0 * radius);
                }
            }
            let cap_offsets = [(0.0, 0.0), (0.5, 0.0), (-0.5, 0.0), (0.0, 0.5), (0.0, -0.5)];
            for (x, y) in cap_offsets {
                push_all(Vec3::new(x * radius, y * radius, 0.0), Vec3::z(), *height);
            }
        }
        Shape::Mesh { .. } => {}
    }
    out
}

fn label_object(o: &SceneObject, scene: &Scene, collider: &SceneCollider, cfg: &LabelConfig) -> Vec<GraspLabel> {
    let cam = &scene.camera;
    let to_cam = cam.pose.rotation.inverse() * o.pose.rotation;
    local_candidates(&o.shape, cfg)
        .into_par_iter()
        .filter_map(|c| {
            let center = cam.world_to_camera(&o.to_world(&c.center));
            let mut g = GraspPose::from_axes(center, to_cam * c.closing, to_cam * c.approach, c.width, 0.0).ok()?;
            if g.approach_axis().z < 0.0 || collider.collides(&g, &cfg.gripper) {
                return None;
            }
            let contacts = find_contacts(&g, scene)?;
            if contacts.owner1 != Surface::Object(o.id) || contacts.owner2 != Surface::Object(o.id) {
                return None;
            }
            let mu = cfg.mu_set.iter().copied().find(|&mu| force_closure(&contacts, mu))?;
            let quality = ((QUALITY_MU - mu) / QUALITY_MU).clamp(0.0, 1.0);
            g.score = quality;
            Some(GraspLabel { pose: g, quality, object: o.id })
        })
        .collect()
}

/// Analytic antipodal labels for every primitive in the scene.
///
/// Spheres get diametral grasps, boxes face-pair grasps across every gap the
/// gripper spans, cylinders side and cap grasps. Each candidate is kept only
/// if it is collision-free in the full scene, both contacts lie on its object
/// and it reaches force closure within `mu_set`; quality is
/// `(1.1 - mu_min) / 1.1`.
pub fn synthesize_labels(scene: &Scene, cfg: &LabelConfig) -> LabelSet {
    let collider = SceneCollider::new(scene, COLLISION_SPACING);
    let mut set = LabelSet::default();
    for o in &scene.objects {
        let labels = label_object(o, scene, &collider, cfg);
        set.per_object.push((o.id, labels.len()));
        if labels.is_empty() {
            set.unlabeled.push(o.id);
        }
        set.labels.extend(labels);
    }
    set
}

/// A label projected onto the image plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarGrasp {
    pub u: f64,
    pub v: f64,
    pub angle: f64,
    pub width_px: f64,
    pub depth: f64,
}

/// Pinhole projection of label centers; labels at or behind the camera are
/// skipped and counted.
pub fn project_labels(labels: &[GraspLabel], cam: &CameraModel) -> (Vec<PlanarGrasp>, usize) {
    let mut out = Vec::with_capacity(labels.len());
    let mut skipped = 0;
    for l in labels {
        match cam.project(&l.pose.center) {
            Ok((u, v)) => {
                let z = l.pose.center.z;
                out.push(PlanarGrasp { u, v, angle: l.pose.theta, width_px: cam.fx * l.pose.width / z, depth: z });
            }
            Err(_) => skipped += 1,
        }
    }
    (out, skipped)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub width: u32,
    pub height: u32,
    /// Row-major values in `[0, 1]`.
    pub data: Vec<f64>,
}

impl Heatmap {
    pub fn get(&self, u: u32, v: u32) -> f64 {
        self.data[(v * self.width + u) as usize]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// First pixel holding the maximum, row-major.
    pub fn argmax(&self) -> (u32, u32) {
        let mut best = 0;
        for (i, &x) in self.data.iter().enumerate() {
            if x > self.data[best] {
                best = i;
            }
        }
        (best as u32 % self.width, best as u32 / self.width)
    }
}

fn gaussian_weights(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    (-r..=r).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect()
}

/// Separable Gaussian blur, renormalized over in-image taps.
fn blur(data: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let wts = gaussian_weights(sigma);
    let r = (wts.len() / 2) as i64;
    let pass = |src: &[f64], along_x: bool| -> Vec<f64> {
        let mut dst = vec![0.0; src.len()];
        for y in 0..h {
            for x in 0..w {
                let (mut acc, mut norm) = (0.0, 0.0);
                for (t, &wt) in wts.iter().enumerate() {
                    let k = t as i64 - r;
                    let (xx, yy) = if along_x { (x as i64 + k, y as i64) } else { (x as i64, y as i64 + k) };
                    if xx < 0 || yy < 0 || xx >= w as i64 || yy >= h as i64 {
                        continue;
                    }
                    acc += wt * src[yy as usize * w + xx as usize];
                    norm += wt;
                }
                dst[y * w + x] = acc / norm;
            }
        }
        dst
    };
    pass(&pass(data, true), false)
}

/// Gaussian kernels (truncated at 3 sigma) combined by per-pixel maximum,
/// blurred, then rescaled to a maximum of 1.
pub fn build_heatmap(centers: &[(f64, f64)], height: u32, width: u32, sigma_k: f64, sigma_b: f64) -> Result<Heatmap> {
    if !(sigma_k > 0.0 && sigma_b > 0.0) {
        return Err(Error::Range(format!("sigmas must be positive, got {sigma_k} and {sigma_b}")));
    }
    let (w, h) = (width as usize, height as usize);
    let mut data = vec![0.0; w * h];
    let reach = 3.0 * sigma_k;
    for &(u, v) in centers {
        let x0 = (u - reach).ceil().max(0.0) as i64;
        let x1 = (u + reach).floor().min(w as f64 - 1.0) as i64;
        let y0 = (v - reach).ceil().max(0.0) as i64;
        let y1 = (v + reach).floor().min(h as f64 - 1.0) as i64;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d2 = (x as f64 - u).powi(2) + (y as f64 - v).powi(2);
                if d2 <= reach * reach {
                    let i = y as usize * w + x as usize;
                    data[i] = f64::max(data[i], (-d2 / (2.0 * sigma_k * sigma_k)).exp());
                }
            }
        }
    }
    let mut data = blur(&data, w, h, sigma_b);
    let peak = data.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        data.iter_mut().for_each(|x| *x = (*x / peak).clamp(0.0, 1.0));
    }
    Ok(Heatmap { width, height, data })
}

/// A sampled region center with the pixel it came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledCenter {
    pub point: Vec3,
    pub pixel: (u32, u32),
    pub value: f64,
}

/// Per-tile argmax of the heatmap, kept when it reaches `tau` times the
/// global maximum and has valid depth; at most `max_k`, strongest first.
pub fn grid_sample_centers(hm: &Heatmap, cell: u32, tau: f64, img: &RgbdImage, cam: &CameraModel, max_k: usize) -> Result<Vec<SampledCenter>> {
    if cell == 0 {
        return Err(Error::Range("cell must be at least 1".into()));
    }
    if img.width != hm.width || img.height != hm.height {
        return Err(Error::Format("heatmap and depth map sizes differ".into()));
    }
    let peak = hm.max();
    if peak <= 0.0 {
        return Ok(Vec::new());
    }
    let mut picks = Vec::new();
    for ty in (0..hm.height).step_by(cell as usize) {
        for tx in (0..hm.width).step_by(cell as usize) {
            let mut best = (tx, ty);
            for y in ty..(ty + cell).min(hm.height) {
                for x in tx..(tx + cell).min(hm.width) {
                    if hm.get(x, y) > hm.get(best.0, best.1) {
                        best = (x, y);
                    }
                }
            }
            let value = hm.get(best.0, best.1);
            let z = img.depth_at(best.0, best.1);
            if value > 0.0 && value >= tau * peak && z > 0.0 {
                let point = cam.unproject(best.0 as f64, best.1 as f64, z)?;
                picks.push(SampledCenter { point, pixel: best, value });
            }
        }
    }
    picks.sort_by(|a, b| b.value.total_cmp(&a.value).then((a.pixel.1, a.pixel.0).cmp(&(b.pixel.1, b.pixel.0))));
    picks.truncate(max_k);
    Ok(picks)
}

/// Labels within `r` of `center3d`, in the region frame. Labels whose offset
/// leaves the per-axis offset box are dropped rather than clamped.
pub fn filter_labels(labels: &[GraspLabel], center3d: &Vec3, r: f64) -> Vec<RegionGrasp> {
    labels
        .iter()
        .filter_map(|l| {
            let dt = l.pose.center - center3d;
            (dt.norm() <= r && dt.amax() <= OFFSET_LIMIT).then_some(RegionGrasp {
                dt,
                theta: l.pose.theta,
                beta: l.pose.beta,
                gamma: l.pose.gamma,
                width: l.pose.width,
                score: l.quality,
            })
        })
        .collect()
}

/// Nearest `f32` value no farther from zero than `x`.
fn f32_inward(x: f64) -> f64 {
    let y = x as f32;
    let y = if (y as f64).abs() > x.abs() {
        if x > 0.0 {
            y.next_down()
        } else {
            y.next_up()
        }
    } else {
        y
    };
    y as f64
}

/// Rounds a label to what the record format stores, toward zero so bounds
/// that held before rounding still hold.
pub fn storable_label(g: &RegionGrasp) -> RegionGrasp {
    RegionGrasp {
        dt: g.dt.map(f32_inward),
        theta: f32_inward(g.theta),
        beta: f32_inward(g.beta),
        gamma: f32_inward(g.gamma),
        width: f32_inward(g.width),
        score: f32_inward(g.score),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub scene_id: u32,
    pub sigma_k: f64,
    pub sigma_b: f64,
    pub cell: u32,
    pub tau: f64,
    pub max_k: usize,
    /// Coverage radius for labels around a center, meters.
    pub radius: f64,
    pub metric_window: f64,
    pub patch_size: usize,
    /// Largest share of the output that zero-label records may make up.
    pub negative_fraction: f64,
    pub drop_color: bool,
    pub drop_position: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            scene_id: 0,
            sigma_k: 2.0,
            sigma_b: 3.0,
            cell: 8,
            tau: 0.2,
            max_k: 64,
            radius: 0.02,
            metric_window: crate::guidance::DEFAULT_WINDOW,
            patch_size: crate::guidance::DEFAULT_PATCH_SIZE,
            negative_fraction: 0.1,
            drop_color: false,
            drop_position: false,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !(0.0..1.0).contains(&self.negative_fraction) || self.cell == 0 || self.patch_size == 0 {
            return Err(Error::Config("radius, cell and patch size must be positive, negative fraction in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub scene_id: u32,
    pub center_index: u32,
    pub patch: RegionPatch,
    pub labels: Vec<RegionGrasp>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub labels: usize,
    pub labels_skipped: usize,
    pub centers: usize,
    pub patch_failures: usize,
    pub positives: usize,
    pub negatives: usize,
    pub negatives_kept: usize,
}

/// Per-record patch geometry that `records.bin` does not carry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub scene_id: u32,
    pub center_index: u32,
    pub center3d: Vec3,
    pub center_pixel: (f64, f64),
    pub metric_window: f64,
    pub crop_side: f64,
    pub intrinsics: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub config: DatasetConfig,
    pub counts: DatasetCounts,
    pub records: Vec<RecordMeta>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub records: Vec<PatchRecord>,
}

/// Render, project labels, build the heatmap, sample centers, then crop a
/// patch and collect nearby labels for each center. Zero-label records are
/// kept, chosen by `seed`, up to the configured negative share.
pub fn generate_dataset(scene: &Scene, labels: &[GraspLabel], cfg: &DatasetConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    if labels.is_empty() {
        return Err(Error::Config("no grasp labels to build a dataset from".into()));
    }
    let cam = &scene.camera;
    let img = render(scene);
    let (planar, skipped) = project_labels(labels, cam);
    let pixels: Vec<(f64, f64)> = planar.iter().map(|p| (p.u, p.v)).collect();
    let hm = build_heatmap(&pixels, img.height, img.width, cfg.sigma_k, cfg.sigma_b)?;
    let centers = grid_sample_centers(&hm, cfg.cell, cfg.tau, &img, cam, cfg.max_k)?;

    let built: Vec<Option<PatchRecord>> = centers
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut patch = extract_patch(&img, cam, &c.point, cfg.metric_window, cfg.patch_size).ok()?;
            patch.ablate(cfg.drop_color, cfg.drop_position);
            let labels = filter_labels(labels, &c.point, cfg.radius).iter().map(storable_label).collect();
            Some(PatchRecord { scene_id: cfg.scene_id, center_index: i as u32, patch, labels })
        })
        .collect();
    let mut counts = DatasetCounts { labels: labels.len(), labels_skipped: skipped, centers: centers.len(), ..Default::default() };
    counts.patch_failures = built.iter().filter(|r| r.is_none()).count();
    let built: Vec<PatchRecord> = built.into_iter().flatten().collect();

    let negatives: Vec<usize> = (0..built.len()).filter(|&i| built[i].labels.is_empty()).collect();
    counts.negatives = negatives.len();
    counts.positives = built.len() - negatives.len();
    let f = cfg.negative_fraction;
    let keep_n = ((f * counts.positives as f64 / (1.0 - f)).floor() as usize).min(negatives.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; built.len()];
    built.iter().enumerate().filter(|(_, r)| !r.labels.is_empty()).for_each(|(i, _)| keep[i] = true);
    for j in index::sample(&mut rng, negatives.len(), keep_n) {
        keep[negatives[j]] = true;
    }
    counts.negatives_kept = keep_n;

    let records: Vec<PatchRecord> = built.into_iter().zip(keep).filter(|(_, k)| *k).map(|(r, _)| r).collect();
    let metas = records.iter().map(meta_of).collect();
    Ok(Dataset {
        manifest: Manifest { format_version: FORMAT_VERSION, seed, config: cfg.clone(), counts, records: metas },
        records,
    })
}

fn meta_of(r: &PatchRecord) -> RecordMeta {
    RecordMeta {
        scene_id: r.scene_id,
        center_index: r.center_index,
        center3d: r.patch.center3d,
        center_pixel: r.patch.center_pixel,
        metric_window: r.patch.metric_window,
        crop_side: r.patch.crop_side,
        intrinsics: r.patch.intrinsics,
    }
}

fn label_values(g: &RegionGrasp) -> [f64; 8] {
    [g.dt.x, g.dt.y, g.dt.z, g.theta, g.beta, g.gamma, g.width, g.score]
}

/// Little-endian record stream: header (scene id, center index, label
/// count as u32), `6 x n x n` f32 maps, `n x n` u8 valid mask, then eight
/// f32 per label. Fails if a label value is not exactly an `f32`.
pub fn encode_records(records: &[PatchRecord], patch_size: usize) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        let n = r.patch.size;
        if n != patch_size || r.patch.maps.len() != 6 * n * n || r.patch.valid.len() != n * n {
            return Err(Error::Format(format!("record {} has a malformed {n}x{n} patch", r.center_index)));
        }
        out.extend_from_slice(&r.scene_id.to_le_bytes());
        out.extend_from_slice(&r.center_index.to_le_bytes());
        out.extend_from_slice(&(r.labels.len() as u32).to_le_bytes());
        for x in &r.patch.maps {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend(r.patch.valid.iter().map(|&b| b as u8));
        for g in &r.labels {
            for x in label_values(g) {
                let y = x as f32;
                if y as f64 != x && !(x.is_nan() && y.is_nan()) {
                    return Err(Error::Format(format!("label value {x} is not representable as f32")));
                }
                out.extend_from_slice(&y.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("records truncated at byte {}", self.at)))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Inverse of [`encode_records`], completing patches from the manifest.
pub fn decode_records(bytes: &[u8], manifest: &Manifest) -> Result<Vec<PatchRecord>> {
    let n = manifest.config.patch_size;
    let mut cur = Cursor { bytes, at: 0 };
    let mut records = Vec::with_capacity(manifest.records.len());
    for meta in &manifest.records {
        let scene_id = cur.u32()?;
        let center_index = cur.u32()?;
        if scene_id != meta.scene_id || center_index != meta.center_index {
            return Err(Error::Format(format!("record ({scene_id}, {center_index}) does not match the manifest")));
        }
        let count = cur.u32()? as usize;
        let maps = (0..6 * n * n).map(|_| cur.f32()).collect::<Result<Vec<_>>>()?;
        let valid = cur.take(n * n)?.iter().map(|&b| b != 0).collect();
        let mut labels = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let mut v = [0.0; 8];
            for x in v.iter_mut() {
                *x = cur.f32()? as f64;
            }
            labels.push(RegionGrasp { dt: Vec3::new(v[0], v[1], v[2]), theta: v[3], beta: v[4], gamma: v[5], width: v[6], score: v[7] });
        }
        let patch = RegionPatch {
            center3d: meta.center3d,
            center_pixel: meta.center_pixel,
            size: n,
            maps,
            valid,
            metric_window: meta.metric_window,
            crop_side: meta.crop_side,
            intrinsics: meta.intrinsics,
        };
        records.push(PatchRecord { scene_id, center_index, patch, labels });
    }
    if cur.at != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after the last record", bytes.len() - cur.at)));
    }
    Ok(records)
}

pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    if ds.manifest.records != ds.records.iter().map(meta_of).collect::<Vec<_>>() {
        return Err(Error::Format("manifest does not describe the records".into()));
    }
    let bytes = encode_records(&ds.records, ds.manifest.config.patch_size)?;
    fs::create_dir_all(dir)?;
    fs::File::create(dir.join(RECORDS_FILE))?.write_all(&bytes)?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&ds.manifest)?)?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {}", manifest.format_version)));
    }
    let mut bytes = Vec::new();
    fs::File::open(dir.join(RECORDS_FILE))?.read_to_end(&mut bytes)?;
    let records = decode_records(&bytes, &manifest)?;
    Ok(Dataset { manifest, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::top_down_pose;
    use crate::scene::rest_on_plane;
    use nalgebra::UnitQuaternion;

    #[test]
    fn config_fills_defaults_and_rejects_typos() {
        let cfg: DatasetConfig = serde_json::from_str(r#"{"max_k": 16}"#).unwrap();
        assert_eq!(cfg, DatasetConfig { max_k: 16, ..Default::default() });
        assert!(serde_json::from_str::<DatasetConfig>(r#"{"maxk": 16}"#).is_err());
    }

    fn label_at(center: Vec3, theta: f64, width: f64) -> GraspLabel {
        GraspLabel { pose: GraspPose { center, theta, beta: 0.0, gamma: 0.0, width, score: 1.0 }, quality: 1.0, object: 0 }
    }

    #[test]
    fn pinhole_projection_of_label() {
        let cam = CameraModel::default();
        let (p, skipped) = project_labels(&[label_at(Vec3::new(0.0, 0.0, 1.0), 0.3, 0.04)], &cam);
        assert_eq!(skipped, 0);
        assert_eq!((p[0].u, p[0].v, p[0].angle), (320.0, 240.0, 0.3));
        assert!((p[0].width_px - 24.0).abs() < 1e-12);
        let (_, skipped) = project_labels(&[label_at(Vec3::new(0.0, 0.0, -1.0), 0.0, 0.04)], &cam);
        assert_eq!(skipped, 1);
    }

    #[test]
    fn heatmap_single_and_empty() {
        let hm = build_heatmap(&[(20.0, 11.0)], 40, 50, 2.0, 3.0).unwrap();
        assert_eq!(hm.argmax(), (20, 11));
        assert_eq!(hm.max(), 1.0);
        let empty = build_heatmap(&[], 40, 50, 2.0, 3.0).unwrap();
        assert!(empty.data.iter().all(|&x| x == 0.0));
        assert!(build_heatmap(&[], 4, 4, 0.0, 1.0).is_err());
    }

    #[test]
    fn filter_bounds() {
        let c = Vec3::new(0.0, 0.0, 0.5);
        let labels = [label_at(c, 0.0, 0.05), label_at(c + Vec3::new(0.021, 0.0, 0.0), 0.0, 0.05)];
        let kept = filter_labels(&labels, &c, 0.02);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].dt, Vec3::zeros());
        // Within a 4 cm radius, but beyond the per-axis offset box.
        assert!(filter_labels(&labels[1..], &c, 0.04).is_empty());
    }

    #[test]
    fn inward_rounding_keeps_bounds() {
        let half_pi = std::f64::consts::FRAC_PI_2;
        assert!(f32_inward(half_pi) <= half_pi);
        assert!(f32_inward(-half_pi) >= -half_pi);
        assert_eq!(f32_inward(0.25), 0.25);
    }

    #[test]
    fn sphere_labels_are_diametral() {
        let r = 0.03;
        let cam = CameraModel { pose: top_down_pose(0.5 + r), ..Default::default() };
        let s = rest_on_plane(0, Shape::Sphere { radius: r, segments: 64 }, UnitQuaternion::identity(), [0.0, 0.0], [1.0; 3]).unwrap();
        let scene = Scene::new(vec![s], cam, 0).unwrap();
        let set = synthesize_labels(&scene, &LabelConfig::default());
        assert!(!set.labels.is_empty());
        assert!(set.unlabeled.is_empty());
        for l in &set.labels {
            assert!((l.pose.center - Vec3::new(0.0, 0.0, 0.5)).norm() < 1e-9);
            assert!((0.0..=1.0).contains(&l.quality));
        }
    }
}
