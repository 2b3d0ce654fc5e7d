//! Detection as the CLI and the HTTP service run it: guidance centers,
//! patches, the analytic predictor, then NMS across patches.

use std::time::Instant;

use regiongrasp::detector::{AnalyticPredictor, GraspPredictor};
use regiongrasp::eval::{nms_order, EvalConfig, SceneSnapshot};
use regiongrasp::geom::{GraspPose, GripperModel, Vec3};
use regiongrasp::guidance::{
    click_to_centers, extract_patches, mask_to_centers, pointing_to_centers, GuidanceResult, Mask, DEFAULT_CENTERS, DEFAULT_CONE_RADIUS,
    DEFAULT_PATCH_SIZE, DEFAULT_RADIUS, DEFAULT_WINDOW,
};
use regiongrasp::{Error, Result};
use serde::{Deserialize, Serialize};

/// How the user pointed at the target.
#[derive(Clone, Debug, PartialEq)]
pub enum Guide {
    Click { u: f64, v: f64 },
    Mask(Mask),
    Pointing(Vec<Vec3>),
}

/// A grasp with its gripper outline in the camera frame and in pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspView {
    pub pose: GraspPose,
    pub outline: Vec<[f64; 3]>,
    pub outline_px: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub guidance_ms: f64,
    pub detect_ms: f64,
    pub total_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub centers: Vec<[f64; 3]>,
    pub grasps: Vec<GraspView>,
}

pub fn guidance(snap: &SceneSnapshot, guide: &Guide, centers: usize) -> Result<GuidanceResult> {
    let (img, cam, seed) = (&snap.image, snap.camera(), snap.scene.seed);
    match guide {
        Guide::Click { u, v } => click_to_centers(*u, *v, img, cam, centers, DEFAULT_RADIUS, seed),
        Guide::Mask(m) => {
            if (m.width, m.height) != (img.width, img.height) {
                return Err(Error::Format(format!("mask is {}x{}, image is {}x{}", m.width, m.height, img.width, img.height)));
            }
            mask_to_centers(&m.data, img, cam, centers, seed)
        }
        Guide::Pointing(kp) => pointing_to_centers(kp, img, &snap.cloud, cam, centers, DEFAULT_RADIUS, DEFAULT_CONE_RADIUS, seed),
    }
}

pub fn view(g: &GraspPose, snap: &SceneSnapshot, gripper: &GripperModel) -> GraspView {
    let outline = gripper.outline(g);
    let outline_px = outline.iter().filter_map(|p| snap.camera().project(p).ok()).map(|(u, v)| [u, v]).collect();
    GraspView { pose: g.clone(), outline: outline.iter().map(|p| [p.x, p.y, p.z]).collect(), outline_px }
}

/// Top `k` grasps after NMS for the guided region, best first.
pub fn detect(snap: &SceneSnapshot, guide: &Guide, k: usize) -> Result<(Detection, Timings)> {
    if k == 0 {
        return Err(Error::Range("k must be at least 1".into()));
    }
    let start = Instant::now();
    let g = guidance(snap, guide, DEFAULT_CENTERS)?;
    let guidance_ms = start.elapsed().as_secs_f64() * 1e3;
    let (patches, _) = extract_patches(&snap.image, snap.camera(), &g.centers, DEFAULT_WINDOW, DEFAULT_PATCH_SIZE);
    if patches.is_empty() {
        return Err(Error::Patch("no region patch could be extracted".into()));
    }
    let grasps: Vec<GraspPose> = AnalyticPredictor::default().predict(&patches, k)?.into_iter().flatten().collect();
    let cfg = EvalConfig::default();
    let views = nms_order(&grasps, cfg.nms_trans, cfg.nms_rot).into_iter().take(k).map(|i| view(&grasps[i], snap, &cfg.gripper)).collect();
    let total_ms = start.elapsed().as_secs_f64() * 1e3;
    let detection = Detection { centers: g.centers.iter().map(|c| [c.x, c.y, c.z]).collect(), grasps: views };
    Ok((detection, Timings { guidance_ms, detect_ms: total_ms - guidance_ms, total_ms }))
}
