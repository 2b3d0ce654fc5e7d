//! Click-guided detection on a clutter scene followed by NMS, Target-AP and
//! the verdict for executing the top grasp.

use regiongrasp::detector::{AnalyticPredictor, GraspPredictor};
use regiongrasp::eval::{assign_target, judge_grasp, nms, target_ap, EvalConfig, SceneSnapshot};
use regiongrasp::geom::CameraModel;
use regiongrasp::guidance::{extract_patches, mask_to_centers, DEFAULT_PATCH_SIZE, DEFAULT_WINDOW};
use regiongrasp::scene::{default_library, generate_clutter};

fn main() -> regiongrasp::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(21);
    let snap = SceneSnapshot::new(generate_clutter(seed, 5, &default_library(), CameraModel::default())?);
    let cfg = EvalConfig::default();
    let target = assign_target(&snap.image, cfg.min_visible_pixels, seed)?;

    let guidance = mask_to_centers(&snap.image.object_mask(target), &snap.image, snap.camera(), 8, seed)?;
    let (patches, _) = extract_patches(&snap.image, snap.camera(), &guidance.centers, DEFAULT_WINDOW, DEFAULT_PATCH_SIZE);
    let grasps: Vec<_> = AnalyticPredictor::default().predict(&patches, 10)?.into_iter().flatten().collect();
    let kept = nms(&grasps, cfg.nms_trans, cfg.nms_rot)?;
    println!("target {target}: {} grasps, {} after NMS", grasps.len(), kept.len());

    let report = target_ap(&grasps, &snap, target, &cfg);
    for (mu, ap) in report.mu_set.iter().zip(&report.ap_per_mu) {
        println!("mu {mu:.1}: AP {ap:.3}");
    }
    println!("Target-AP {:.4}, counts {:?}", report.target_ap, report.counts);

    if let Some(top) = kept.first() {
        let (ok, reason, collision, min_mu) = judge_grasp(top, &snap, Some(target), &cfg);
        println!("top grasp width {:.3} m: success {ok} ({reason}), collision {collision}, min mu {min_mu:?}", top.width);
    }
    Ok(())
}
