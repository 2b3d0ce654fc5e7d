//! Grasp NMS, contacts and force closure, collision checks, target-oriented
//! average precision, and the seeded simulation harness.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::GraspPredictor;
use crate::error::{Error, Result};
use crate::geom::{angle_between, rotation_distance, CameraModel, GraspPose, GripperModel, Vec3};
use crate::guidance::{extract_patches, mask_to_centers, GuidanceResult, DEFAULT_CENTERS, DEFAULT_PATCH_SIZE, DEFAULT_WINDOW};
use crate::scene::{cloud_from_depth, default_library, generate_clutter, render, PointCloud, RgbdImage, Scene, Surface};

pub const DEFAULT_MU_SET: [f64; 6] = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2];

/// Indices of the grasps kept by greedy NMS, in keep order.
///
/// Grasps are visited by descending score, ties by input index. A grasp is
/// suppressed when a kept grasp is within `d_trans` meters AND `d_rot`
/// radians of it.
pub fn nms_order(grasps: &[GraspPose], d_trans: f64, d_rot: f64) -> Vec<usize> {
    nms_order_where(grasps, d_trans, d_rot, usize::MAX, |_| true)
}

/// Greedy NMS over the grasps accepted by `keep`, stopping after `limit`
/// survivors. Equals filtering first, running [`nms_order`] and truncating,
/// but only calls `keep` on grasps no survivor suppresses.
pub fn nms_order_where(grasps: &[GraspPose], d_trans: f64, d_rot: f64, limit: usize, mut keep: impl FnMut(&GraspPose) -> bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..grasps.len()).collect();
    order.sort_by(|&a, &b| grasps[b].score.total_cmp(&grasps[a].score).then(a.cmp(&b)));
    let rots: Vec<_> = grasps.iter().map(GraspPose::rotation).collect();
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.len() >= limit {
            break;
        }
        let dup = kept.iter().any(|&j| {
            (grasps[i].center - grasps[j].center).norm() <= d_trans && rotation_distance(&rots[i], &rots[j]) <= d_rot
        });
        if !dup && keep(&grasps[i]) {
            kept.push(i);
        }
    }
    kept
}

pub fn nms(grasps: &[GraspPose], d_trans: f64, d_rot: f64) -> Result<Vec<GraspPose>> {
    if !(d_trans > 0.0 && d_rot > 0.0) {
        return Err(Error::Range("NMS thresholds must be positive".into()));
    }
    Ok(nms_order(grasps, d_trans, d_rot).into_iter().map(|i| grasps[i].clone()).collect())
}

/// Finger contacts in the camera frame. `p1` is on the `-closing` side;
/// normals point into the contacted surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactPair {
    pub p1: Vec3,
    pub p2: Vec3,
    pub n1: Vec3,
    pub n2: Vec3,
    pub owner1: Surface,
    pub owner2: Surface,
}

/// First surface hits along both closing directions within half the width.
pub fn find_contacts(g: &GraspPose, scene: &Scene) -> Option<ContactPair> {
    let x = g.closing_axis();
    let reach = 0.5 * g.width;
    let h1 = scene.raycast_camera(&g.center, &-x).filter(|h| h.distance <= reach)?;
    let h2 = scene.raycast_camera(&g.center, &x).filter(|h| h.distance <= reach)?;
    if h1.point == h2.point {
        return None;
    }
    Some(ContactPair { p1: h1.point, p2: h2.point, n1: -h1.outward, n2: -h2.outward, owner1: h1.surface, owner2: h2.surface })
}

/// Two-finger antipodal test: the contact line lies in both friction cones.
pub fn force_closure(c: &ContactPair, mu: f64) -> bool {
    if !(mu > 0.0) {
        return false;
    }
    let half = mu.atan();
    let line = c.p2 - c.p1;
    angle_between(&line, &c.n1) <= half && angle_between(&-line, &c.n2) <= half
}

/// Smallest `mu` of an ascending set at which the grasp is in force closure.
pub fn min_friction(g: &GraspPose, scene: &Scene, mu_set: &[f64]) -> Option<f64> {
    let c = find_contacts(g, scene)?;
    mu_set.iter().copied().find(|&mu| force_closure(&c, mu))
}

pub fn collision_check(g: &GraspPose, cloud: &[Vec3], gripper: &GripperModel) -> bool {
    gripper.collides(g, cloud)
}

/// Deterministic surface samples of every object plus the support plane,
/// for collision checks against the full (not just visible) geometry.
#[derive(Clone, Debug)]
pub struct SceneCollider {
    /// Camera-frame surface samples.
    pub points: Vec<Vec3>,
    /// Support plane in the camera frame as `(unit normal, offset)`, points
    /// with `n . p + d < 0` lie below it.
    plane: (Vec3, f64),
}

/// Default spacing of collision surface samples, meters.
pub const COLLISION_SPACING: f64 = 0.002;

impl SceneCollider {
    pub fn new(scene: &Scene, spacing: f64) -> Self {
        let mut points = Vec::new();
        for o in &scene.objects {
            let mesh = o.mesh();
            for t in 0..mesh.triangles.len() {
                let [a, b, c] = mesh.corners(t);
                let longest = (b - a).norm().max((c - a).norm()).max((c - b).norm());
                let n = ((longest / spacing).ceil() as usize).max(1);
                for i in 0..=n {
                    for j in 0..=(n - i) {
                        let p = a + (b - a) * (i as f64 / n as f64) + (c - a) * (j as f64 / n as f64);
                        points.push(scene.camera.world_to_camera(&o.to_world(&p)));
                    }
                }
            }
        }
        let normal = scene.camera.pose.rotation.inverse_transform_vector(&Vec3::z());
        let origin = scene.camera.world_to_camera(&Vec3::zeros());
        Self { points, plane: (normal, -normal.dot(&origin)) }
    }

    /// Gripper overlaps an object sample or dips below the support plane.
    pub fn collides(&self, g: &GraspPose, gripper: &GripperModel) -> bool {
        let r = g.rotation();
        let (n, d) = self.plane;
        for b in gripper.boxes(g.width) {
            for k in 0..8 {
                let corner = Vec3::new(
                    if k & 1 == 0 { b.min.x } else { b.max.x },
                    if k & 2 == 0 { b.min.y } else { b.max.y },
                    if k & 4 == 0 { b.min.z } else { b.max.z },
                );
                if n.dot(&(g.center + r * corner)) + d < 0.0 {
                    return true;
                }
            }
        }
        gripper.collides(g, &self.points)
    }
}

/// A scene rendered once, with everything evaluation needs.
#[derive(Clone, Debug)]
pub struct SceneSnapshot {
    pub scene: Scene,
    pub image: RgbdImage,
    pub cloud: PointCloud,
    pub collider: SceneCollider,
}

impl SceneSnapshot {
    pub fn new(scene: Scene) -> Self {
        let image = render(&scene);
        let cloud = cloud_from_depth(&image, &scene.camera);
        let collider = SceneCollider::new(&scene, COLLISION_SPACING);
        Self { scene, image, cloud, collider }
    }

    pub fn camera(&self) -> &CameraModel {
        &self.scene.camera
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub mu_set: Vec<f64>,
    pub nms_trans: f64,
    pub nms_rot: f64,
    pub top_k: usize,
    pub gripper: GripperModel,
    /// Largest friction coefficient a successful pick may need.
    pub success_mu: f64,
    /// Center-to-mesh distance for target association without contacts.
    pub fallback_distance: f64,
    pub min_visible_pixels: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mu_set: DEFAULT_MU_SET.to_vec(),
            nms_trans: 0.03,
            nms_rot: PI / 6.0,
            top_k: 10,
            gripper: GripperModel::default(),
            success_mu: 0.8,
            fallback_distance: 0.02,
            min_visible_pixels: 200,
        }
    }
}

/// Objects with at least `min_pixels` visible pixels, by id.
pub fn eligible_targets(img: &RgbdImage, min_pixels: usize) -> Vec<(u32, usize)> {
    img.visibility().into_iter().filter(|&(_, n)| n >= min_pixels).collect()
}

pub fn assign_target(img: &RgbdImage, min_pixels: usize, seed: u64) -> Result<u32> {
    let e = eligible_targets(img, min_pixels);
    if e.is_empty() {
        return Err(Error::NoEligibleTarget);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(e[rng.random_range(0..e.len())].0)
}

/// Contacts both on the target; without contacts, the center must be within
/// `fallback_distance` of the target mesh and the target the nearest object.
pub fn on_target(g: &GraspPose, scene: &Scene, target: u32, fallback_distance: f64) -> bool {
    if let Some(c) = find_contacts(g, scene) {
        return c.owner1 == Surface::Object(target) && c.owner2 == Surface::Object(target);
    }
    match scene.nearest_object_camera(&g.center) {
        Some((id, d)) => id == target && d <= fallback_distance,
        None => false,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub detected: usize,
    pub on_target: usize,
    pub after_nms: usize,
    pub evaluated: usize,
    pub collision_free: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mu_set: Vec<f64>,
    /// `precision[m][k - 1]` is precision@k at `mu_set[m]`.
    pub precision: Vec<Vec<f64>>,
    pub ap_per_mu: Vec<f64>,
    pub target_ap: f64,
    pub counts: EvalCounts,
}

/// Precision table from per-rank success flags (`flags[rank][mu]`); ranks
/// beyond `flags.len()` up to `top_k` count as failures.
pub fn report_from_flags(flags: &[Vec<bool>], mu_set: &[f64], top_k: usize, counts: EvalCounts) -> EvalReport {
    let mut precision = Vec::with_capacity(mu_set.len());
    for m in 0..mu_set.len() {
        let mut hits = 0usize;
        let row: Vec<f64> = (1..=top_k)
            .map(|k| {
                if flags.get(k - 1).is_some_and(|f| f[m]) {
                    hits += 1;
                }
                hits as f64 / k as f64
            })
            .collect();
        precision.push(row);
    }
    let ap_per_mu: Vec<f64> = precision.iter().map(|r| if r.is_empty() { 0.0 } else { r.iter().sum::<f64>() / r.len() as f64 }).collect();
    let target_ap = if ap_per_mu.is_empty() { 0.0 } else { ap_per_mu.iter().sum::<f64>() / ap_per_mu.len() as f64 };
    EvalReport { mu_set: mu_set.to_vec(), precision, ap_per_mu, target_ap, counts }
}

/// Target-oriented AP: on-target filter, NMS, top-k, then precision@k of
/// collision-free force-closure grasps for every friction coefficient.
pub fn target_ap(grasps: &[GraspPose], snap: &SceneSnapshot, target: u32, cfg: &EvalConfig) -> EvalReport {
    let mut counts = EvalCounts { detected: grasps.len(), ..Default::default() };
    let on: Vec<GraspPose> = grasps.iter().filter(|g| on_target(g, &snap.scene, target, cfg.fallback_distance)).cloned().collect();
    counts.on_target = on.len();
    let kept: Vec<GraspPose> = nms_order(&on, cfg.nms_trans, cfg.nms_rot).into_iter().map(|i| on[i].clone()).collect();
    counts.after_nms = kept.len();
    let top: Vec<&GraspPose> = kept.iter().take(cfg.top_k).collect();
    counts.evaluated = top.len();
    let flags: Vec<Vec<bool>> = top
        .iter()
        .map(|g| {
            let free = !snap.collider.collides(g, &cfg.gripper);
            if free {
                counts.collision_free += 1;
            }
            let contacts = find_contacts(g, &snap.scene);
            cfg.mu_set.iter().map(|&mu| free && contacts.as_ref().is_some_and(|c| force_closure(c, mu))).collect()
        })
        .collect();
    report_from_flags(&flags, &cfg.mu_set, cfg.top_k, counts)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub target: u32,
    pub centers: usize,
    pub patches: usize,
    pub patch_failures: usize,
    pub predicted: usize,
    pub on_target: usize,
    pub after_nms: usize,
    pub chosen: Option<GraspPose>,
    pub collision: Option<bool>,
    pub min_mu: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub reason: String,
    pub trace: EpisodeTrace,
}

/// Verdict for executing one chosen grasp.
pub fn judge_grasp(g: &GraspPose, snap: &SceneSnapshot, target: Option<u32>, cfg: &EvalConfig) -> (bool, String, bool, Option<f64>) {
    let collision = snap.collider.collides(g, &cfg.gripper);
    let min_mu = min_friction(g, &snap.scene, &cfg.mu_set);
    let off_target = target.is_some_and(|t| !on_target(g, &snap.scene, t, cfg.fallback_distance));
    let feasible = find_contacts(g, &snap.scene).is_some_and(|c| force_closure(&c, cfg.success_mu));
    let (ok, reason) = if off_target {
        (false, "off target")
    } else if collision {
        (false, "collision")
    } else if !feasible {
        (false, "no force closure")
    } else {
        (true, "success")
    };
    (ok, reason.to_string(), collision, min_mu)
}

/// One guided pick: patches at the guidance centers, prediction, on-target
/// filter, NMS, then the top-scoring grasp is judged.
pub fn simulate_episode(snap: &SceneSnapshot, target: u32, predictor: &dyn GraspPredictor, guidance: &GuidanceResult, k_per_patch: usize, cfg: &EvalConfig) -> EpisodeResult {
    let mut trace = EpisodeTrace { target, centers: guidance.centers.len(), ..Default::default() };
    let fail = |reason: &str, trace: EpisodeTrace| EpisodeResult { success: false, reason: reason.into(), trace };
    let (patches, failed) = extract_patches(&snap.image, snap.camera(), &guidance.centers, DEFAULT_WINDOW, DEFAULT_PATCH_SIZE);
    trace.patches = patches.len();
    trace.patch_failures = failed.len();
    if patches.is_empty() {
        return fail("no patches", trace);
    }
    let grasps: Vec<GraspPose> = match predictor.predict(&patches, k_per_patch) {
        Ok(lists) => lists.into_iter().flatten().collect(),
        Err(e) => return fail(&format!("predictor error: {e}"), trace),
    };
    trace.predicted = grasps.len();
    if grasps.is_empty() {
        return fail("no grasps", trace);
    }
    let on: Vec<GraspPose> = grasps.into_iter().filter(|g| on_target(g, &snap.scene, target, cfg.fallback_distance)).collect();
    trace.on_target = on.len();
    let kept = nms_order(&on, cfg.nms_trans, cfg.nms_rot);
    trace.after_nms = kept.len();
    let Some(&best) = kept.first() else { return fail("no on-target grasps", trace) };
    let g = on[best].clone();
    let (success, reason, collision, min_mu) = judge_grasp(&g, snap, None, cfg);
    trace.chosen = Some(g);
    trace.collision = Some(collision);
    trace.min_mu = min_mu;
    EpisodeResult { success, reason, trace }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub min_objects: usize,
    pub max_objects: usize,
    pub guidance_centers: usize,
    pub k_per_patch: usize,
    pub eval: EvalConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self { min_objects: 4, max_objects: 8, guidance_centers: DEFAULT_CENTERS, k_per_patch: 10, eval: EvalConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneResult {
    pub index: usize,
    pub scene_seed: u64,
    pub n_objects: usize,
    pub eligible: Vec<u32>,
    pub episodes: Vec<EpisodeResult>,
    /// Set when the scene could not be generated.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub predictor: String,
    pub seed: u64,
    pub n_scenes: usize,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub scenes: Vec<SceneResult>,
}

/// Scene seeds and object counts for a benchmark suite.
pub fn benchmark_plan(n_scenes: usize, seed: u64, cfg: &BenchmarkConfig) -> Vec<(u64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_scenes).map(|_| (rng.random::<u64>(), rng.random_range(cfg.min_objects..=cfg.max_objects))).collect()
}

/// Seeded clutter suite: every eligible object of every scene is a target
/// once, guided by its ground-truth mask.
pub fn run_benchmark(n_scenes: usize, seed: u64, predictor: &dyn GraspPredictor, cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    if n_scenes == 0 {
        return Err(Error::Range("need at least one scene".into()));
    }
    let plan = benchmark_plan(n_scenes, seed, cfg);
    let scenes: Vec<SceneResult> = plan
        .par_iter()
        .enumerate()
        .map(|(index, &(scene_seed, n_objects))| run_scene(index, scene_seed, n_objects, predictor, cfg))
        .collect();
    let episodes = scenes.iter().map(|s| s.episodes.len()).sum();
    let successes = scenes.iter().flat_map(|s| &s.episodes).filter(|e| e.success).count();
    Ok(BenchmarkReport {
        predictor: predictor.name().to_string(),
        seed,
        n_scenes,
        episodes,
        successes,
        success_rate: if episodes == 0 { 0.0 } else { successes as f64 / episodes as f64 },
        scenes,
    })
}

fn run_scene(index: usize, scene_seed: u64, n_objects: usize, predictor: &dyn GraspPredictor, cfg: &BenchmarkConfig) -> SceneResult {
    let mut result = SceneResult { index, scene_seed, n_objects, eligible: vec![], episodes: vec![], error: None };
    let scene = match generate_clutter(scene_seed, n_objects, &default_library(), CameraModel::default()) {
        Ok(s) => s,
        Err(e) => {
            result.error = Some(e.to_string());
            return result;
        }
    };
    let snap = SceneSnapshot::new(scene);
    result.eligible = eligible_targets(&snap.image, cfg.eval.min_visible_pixels).into_iter().map(|(id, _)| id).collect();
    for &target in &result.eligible {
        let mask = snap.image.object_mask(target);
        let guide_seed = scene_seed ^ (target as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let episode = match mask_to_centers(&mask, &snap.image, snap.camera(), cfg.guidance_centers, guide_seed) {
            Ok(g) => simulate_episode(&snap, target, predictor, &g, cfg.k_per_patch, &cfg.eval),
            Err(e) => EpisodeResult { success: false, reason: e.to_string(), trace: EpisodeTrace { target, ..Default::default() } },
        };
        result.episodes.push(episode);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::euler_to_rotation;

    fn grasp(c: [f64; 3], theta: f64, score: f64) -> GraspPose {
        GraspPose { center: Vec3::from(c), theta, beta: 0.0, gamma: 0.0, width: 0.05, score }
    }

    #[test]
    fn identical_grasps_collapse() {
        let g = grasp([0.0, 0.0, 0.5], 0.1, 0.9);
        assert_eq!(nms(&[g.clone(), g.clone()], 0.03, PI / 6.0).unwrap().len(), 1);
    }

    #[test]
    fn distant_grasps_survive() {
        let a = grasp([0.0, 0.0, 0.5], 0.1, 0.9);
        let b = grasp([0.1, 0.0, 0.5], 0.1, 0.8);
        assert_eq!(nms(&[a, b], 0.03, PI / 6.0).unwrap().len(), 2);
    }

    #[test]
    fn ties_keep_input_order() {
        let a = grasp([0.0, 0.0, 0.5], 0.1, 0.5);
        let b = grasp([0.001, 0.0, 0.5], 0.1, 0.5);
        let kept = nms(&[a.clone(), b], 0.03, PI / 6.0).unwrap();
        assert_eq!(kept, vec![a]);
    }

    #[test]
    fn thirty_degree_boundary() {
        let half = PI / 6.0;
        let line = Vec3::x();
        let n1 = euler_to_rotation(half, 0.0, 0.0).unwrap() * Vec3::x();
        let n2 = euler_to_rotation(-half, 0.0, 0.0).unwrap() * -Vec3::x();
        let c = ContactPair { p1: Vec3::zeros(), p2: line, n1, n2, owner1: Surface::Plane, owner2: Surface::Plane };
        let t = half.tan();
        assert!(!force_closure(&c, t - 1e-6));
        assert!(force_closure(&c, t + 1e-6));
    }

    #[test]
    fn hand_computed_ap() {
        let good = vec![true; 6];
        let bad = vec![false; 6];
        let flags: Vec<Vec<bool>> = (0..10).map(|i| if i < 5 { good.clone() } else { bad.clone() }).collect();
        let r = report_from_flags(&flags, &DEFAULT_MU_SET, 10, EvalCounts::default());
        let expect = (5.0 + 5.0 / 6.0 + 5.0 / 7.0 + 5.0 / 8.0 + 5.0 / 9.0 + 5.0 / 10.0) / 10.0;
        for ap in &r.ap_per_mu {
            assert!((ap - expect).abs() < 1e-12);
        }
        assert_eq!(report_from_flags(&[], &DEFAULT_MU_SET, 10, EvalCounts::default()).target_ap, 0.0);
    }
}
