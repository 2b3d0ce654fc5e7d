//! The three guidance channels (click, mask, pointing ray) aimed at the same
//! object, each producing region centers for patch extraction.

use regiongrasp::geom::{CameraModel, Vec3};
use regiongrasp::guidance::{click_to_centers, extract_patches, mask_to_centers, pointing_to_centers, GuidanceResult, DEFAULT_CONE_RADIUS, DEFAULT_PATCH_SIZE, DEFAULT_RADIUS, DEFAULT_WINDOW};
use regiongrasp::scene::{cloud_from_depth, default_library, generate_clutter, render};

fn summarize(name: &str, g: &GuidanceResult) {
    let mean = g.centers.iter().sum::<Vec3>() / g.centers.len() as f64;
    let spread = g.centers.iter().map(|c| (c - mean).norm()).fold(0.0, f64::max);
    println!("{name:>8}: {} centers around ({:.3}, {:.3}, {:.3}), spread {:.3} m, confidence {:.2}", g.centers.len(), mean.x, mean.y, mean.z, spread, g.confidence);
}

fn main() -> regiongrasp::Result<()> {
    let cam = CameraModel::default();
    let scene = generate_clutter(5, 5, &default_library(), cam.clone())?;
    let img = render(&scene);
    let (target, _) = img.visibility().into_iter().max_by_key(|&(_, n)| n).expect("visible object");

    // Click the target's pixel centroid.
    let pixels: Vec<(f64, f64)> = (0..img.ids.len()).filter(|&i| img.ids[i] == target).map(|i| ((i as u32 % img.width) as f64, (i as u32 / img.width) as f64)).collect();
    let (u, v) = pixels.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (u, v) = (u / pixels.len() as f64, v / pixels.len() as f64);
    let click = click_to_centers(u, v, &img, &cam, 8, DEFAULT_RADIUS, 1)?;
    summarize("click", &click);

    let mask = mask_to_centers(&img.object_mask(target), &img, &cam, 8, 1)?;
    summarize("mask", &mask);

    // Arm keypoints on a line from above the table toward the clicked point.
    let cloud = cloud_from_depth(&img, &cam);
    let aim = click.centers[0];
    let shoulder = Vec3::new(0.25, -0.2, 0.1);
    let keypoints: Vec<Vec3> = (0..4).map(|i| shoulder + (aim - shoulder) * (0.1 * i as f64)).collect();
    let pointing = pointing_to_centers(&keypoints, &img, &cloud, &cam, 8, DEFAULT_RADIUS, DEFAULT_CONE_RADIUS, 1)?;
    summarize("pointing", &pointing);

    let (patches, failed) = extract_patches(&img, &cam, &mask.centers, DEFAULT_WINDOW, DEFAULT_PATCH_SIZE);
    println!("{} patches extracted, {} failed", patches.len(), failed.len());
    Ok(())
}
