//! Mask-guided grasp detection on a single sphere, scored with Target-AP
//! and one simulated pick.

use nalgebra::UnitQuaternion;
use regiongrasp::detector::{AnalyticPredictor, GraspPredictor};
use regiongrasp::eval::{simulate_episode, target_ap, EvalConfig, SceneSnapshot};
use regiongrasp::geom::{top_down_pose, CameraModel};
use regiongrasp::guidance::{extract_patches, mask_to_centers, DEFAULT_PATCH_SIZE, DEFAULT_WINDOW};
use regiongrasp::scene::{rest_on_plane, Scene, Shape};

fn main() -> regiongrasp::Result<()> {
    let radius = 0.03;
    let camera = CameraModel { pose: top_down_pose(0.5 + radius), ..Default::default() };
    let sphere = rest_on_plane(0, Shape::Sphere { radius, segments: 64 }, UnitQuaternion::identity(), [0.0, 0.0], [0.8, 0.2, 0.2])?;
    let snap = SceneSnapshot::new(Scene::new(vec![sphere], camera, 0)?);

    let mask = snap.image.object_mask(0);
    let guidance = mask_to_centers(&mask, &snap.image, snap.camera(), 8, 1)?;
    let (patches, _) = extract_patches(&snap.image, snap.camera(), &guidance.centers, DEFAULT_WINDOW, DEFAULT_PATCH_SIZE);
    let predictor = AnalyticPredictor::default();
    let grasps: Vec<_> = predictor.predict(&patches, 10)?.into_iter().flatten().collect();

    let cfg = EvalConfig::default();
    let report = target_ap(&grasps, &snap, 0, &cfg);
    println!("{} grasps from {} patches", grasps.len(), patches.len());
    println!("counts {:?}", report.counts);
    println!("AP per mu {:?}", report.ap_per_mu);
    println!("target AP {:.4}", report.target_ap);

    let episode = simulate_episode(&snap, 0, &predictor, &guidance, 10, &cfg);
    println!("episode: {} ({})", episode.success, episode.reason);
    Ok(())
}
