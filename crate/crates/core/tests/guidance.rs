mod common;

use common::*;
use nalgebra::UnitQuaternion;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regiongrasp::geom::{top_down_pose, CameraModel, Vec3};
use regiongrasp::guidance::*;
use regiongrasp::scene::*;

fn two_spheres() -> (Scene, RgbdImage) {
    let cam = CameraModel { pose: top_down_pose(0.53), ..Default::default() };
    let a = rest_on_plane(0, Shape::Sphere { radius: 0.03, segments: 48 }, UnitQuaternion::identity(), [0.0, 0.0], [0.8, 0.2, 0.2]).unwrap();
    let b = rest_on_plane(1, Shape::Box { size: [0.04, 0.04, 0.04] }, UnitQuaternion::identity(), [0.1, 0.05], [0.2, 0.8, 0.2]).unwrap();
    let scene = Scene::new(vec![a, b], cam, 0).unwrap();
    let img = render(&scene);
    (scene, img)
}

#[test]
fn click_centers_stay_within_radius() {
    let (scene, img) = two_spheres();
    for seed in 0..5 {
        let g = click_to_centers(320.0, 240.0, &img, &scene.camera, 8, 0.02, seed).unwrap();
        assert_eq!(g.centers.len(), 8);
        let first = g.centers[0];
        assert!((first - Vec3::new(0.0, 0.0, 0.47)).norm() < 1e-9);
        for c in &g.centers {
            assert!((c - first).norm() <= 0.02);
        }
    }
    let one = click_to_centers(320.0, 240.0, &img, &scene.camera, 1, 0.02, 0).unwrap();
    assert_eq!(one.centers.len(), 1);
}

#[test]
fn background_click_is_no_target() {
    let (scene, img) = two_spheres();
    assert_eq!(click_to_centers(20.0, 20.0, &img, &scene.camera, 8, 0.02, 0).unwrap_err().kind(), "no-target");
    assert_eq!(click_to_centers(-5.0, 10.0, &img, &scene.camera, 8, 0.02, 0).unwrap_err().kind(), "range");
}

#[test]
fn mask_centers_come_from_the_mask() {
    let (scene, img) = two_spheres();
    let mask = img.object_mask(1);
    let g = mask_to_centers(&mask, &img, &scene.camera, 8, 3).unwrap();
    assert_eq!(g.centers.len(), 8);
    for c in &g.centers {
        let (u, v) = scene.camera.project(c).unwrap();
        assert_eq!(img.id_at(u.round() as u32, v.round() as u32), 1);
    }
    let empty = vec![false; mask.len()];
    assert_eq!(mask_to_centers(&empty, &img, &scene.camera, 8, 3).unwrap_err().kind(), "no-target");
}

#[test]
fn pointing_fit_matches_least_squares_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let origin = Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(0.1..0.4));
        let dir = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.2..1.0)).normalize();
        let pts: Vec<Vec3> = (0..6)
            .map(|i| {
                let noise = Vec3::new(rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3), rng.random_range(-1e-3..1e-3));
                origin + dir * (0.05 * i as f64) + noise
            })
            .collect();
        let ray = fit_pointing_ray(&pts).unwrap();
        let (c, v) = line_fit_oracle(&pts);
        assert!((ray.origin - c).norm() < 1e-12);
        assert!(ray.direction.cross(&v).norm() < 1e-9);
        assert!(ray.direction.dot(&dir) > 0.0);
    }
    assert_eq!(fit_pointing_ray(&[Vec3::zeros(); 3]).unwrap_err().kind(), "degenerate");
}

#[test]
fn pointing_ray_hits_near_sphere_surface() {
    let (scene, img) = two_spheres();
    let cloud = cloud_from_depth(&img, &scene.camera);
    let objects: Vec<Vec3> = cloud.points.iter().zip(&cloud.ids).filter(|(_, &id)| id != NO_OBJECT).map(|(p, _)| *p).collect();
    let center = Vec3::new(0.0, 0.0, 0.5);
    let origin = Vec3::new(-0.2, 0.1, 0.2);
    let ray = Ray { origin, direction: (center - origin).normalize() };
    let hit = ray_to_target(&ray, &objects, 0.01).unwrap();
    assert!(scene.surface_distance_camera(0, &hit).unwrap() < 1e-3);
    // The oracle: the first surface the exact ray meets.
    let exact = scene.raycast_camera(&origin, &ray.direction).unwrap();
    assert_eq!(exact.surface, Surface::Object(0));
    assert!((hit - exact.point).norm() < 0.01);
    let away = Ray { origin, direction: -ray.direction };
    assert_eq!(ray_to_target(&away, &objects, 0.01).unwrap_err().kind(), "no-target");
}

#[test]
fn patch_geometry() {
    let (scene, img) = two_spheres();
    let c = Vec3::new(0.0, 0.0, 0.47);
    let p = extract_patch(&img, &scene.camera, &c, 0.08, 32).unwrap();
    assert_eq!((p.size, p.maps.len(), p.valid.len()), (32, 6 * 32 * 32, 32 * 32));
    assert!((p.crop_side - 600.0 * 0.08 / 0.47).abs() < 1e-9);
    let origin = p.point(16, 16).unwrap();
    assert!(origin.norm() < 1e-6);
    // Every valid pixel's stored point reprojects to the pixel it sits on.
    for (r, col, q) in p.points() {
        let (rr, cc) = p.pixel_of(&q).unwrap();
        assert!((rr - r as f64).abs() < 1e-3 && (cc - col as f64).abs() < 1e-3);
    }
    let off = Vec3::new(5.0, 0.0, 0.5);
    assert_eq!(extract_patch(&img, &scene.camera, &off, 0.08, 32).unwrap_err().kind(), "patch");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn click_anywhere_on_the_box_stays_on_it(du in -8i32..8, dv in -8i32..8, seed in any::<u64>()) {
        let (scene, img) = two_spheres();
        let (u, v) = scene.camera.project(&scene.camera.world_to_camera(&Vec3::new(0.1, 0.05, 0.04))).unwrap();
        let g = click_to_centers(u + du as f64, v + dv as f64, &img, &scene.camera, 4, 0.02, seed).unwrap();
        for c in &g.centers {
            let (id, d) = scene.nearest_object_camera(c).unwrap();
            prop_assert_eq!(id, 1);
            prop_assert!(d < 1e-6);
        }
    }
}
