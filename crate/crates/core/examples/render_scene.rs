//! Generates a seeded clutter scene and renders it from the default camera.

use regiongrasp::eval::{eligible_targets, EvalConfig};
use regiongrasp::geom::CameraModel;
use regiongrasp::scene::{default_library, generate_clutter, render};

fn main() -> regiongrasp::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let scene = generate_clutter(seed, 6, &default_library(), CameraModel::default())?;
    let img = render(&scene);

    for o in &scene.objects {
        let t = o.pose.translation.vector;
        println!("object {} {:?} at ({:.3}, {:.3}, {:.3})", o.id, o.shape, t.x, t.y, t.z);
    }
    let (near, far) = img.depth.iter().filter(|d| d.is_finite()).fold((f64::INFINITY, 0.0f64), |(a, b), &d| (a.min(d), b.max(d)));
    println!("{}x{} image, depth {near:.3}..{far:.3} m", img.width, img.height);
    for (id, pixels) in img.visibility() {
        println!("object {id}: {pixels} visible pixels");
    }
    println!("eligible targets {:?}", eligible_targets(&img, EvalConfig::default().min_visible_pixels));
    Ok(())
}
