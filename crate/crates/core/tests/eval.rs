mod common;

use std::f64::consts::PI;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regiongrasp::eval::*;
use regiongrasp::geom::{euler_to_rotation, GraspPose, Vec3};
use regiongrasp::scene::Surface;

#[test]
fn simplex_solves_small_programs() {
    // max x + y st x + 2y + s = 4, 3x + y + u = 6 -> (1.6, 1.2)
    let a = vec![vec![1.0, 2.0, 1.0, 0.0], vec![3.0, 1.0, 0.0, 1.0]];
    let v = lp_maximize(&a, &[4.0, 6.0], &[1.0, 1.0, 0.0, 0.0]).unwrap();
    assert!((v - 2.8).abs() < 1e-9);
    // x + y = -1 with x, y >= 0 is infeasible.
    assert!(lp_maximize(&[vec![1.0, 1.0]], &[-1.0], &[1.0, 0.0]).is_none());
}

#[test]
fn wrench_oracle_matches_angle_test() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut disagreements = 0;
    for _ in 0..300 {
        let (c, mu) = random_contact_pair(&mut rng);
        if force_closure(&c, mu) != wrench_force_closure(&c, mu) {
            disagreements += 1;
            let half = mu.atan();
            let line = c.p2 - c.p1;
            let a1 = regiongrasp::geom::angle_between(&line, &c.n1);
            let a2 = regiongrasp::geom::angle_between(&-line, &c.n2);
            assert!((a1 - half).abs().min((a2 - half).abs()) < 1e-3, "disagreement away from the cone boundary: a1 {a1} a2 {a2} half {half} angle {} oracle {}", force_closure(&c, mu), wrench_force_closure(&c, mu));
        }
    }
    assert!(disagreements <= 3);
}

#[test]
fn thirty_degree_boundary() {
    let half = PI / 6.0;
    let line = Vec3::new(0.05, 0.0, 0.0);
    let n1 = euler_to_rotation(half, 0.0, 0.0).unwrap() * Vec3::x();
    let n2 = euler_to_rotation(half, 0.0, 0.0).unwrap() * -Vec3::x();
    let c = ContactPair { p1: Vec3::new(0.0, 0.0, 0.5), p2: Vec3::new(0.0, 0.0, 0.5) + line, n1, n2, owner1: Surface::Plane, owner2: Surface::Plane };
    let t = half.tan();
    assert!(!force_closure(&c, t - 1e-6));
    assert!(force_closure(&c, t + 1e-6));
    assert!(!wrench_force_closure(&c, t - 1e-3));
    assert!(wrench_force_closure(&c, t + 1e-3));
}

#[test]
fn nms_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for n in [0, 1, 2, 10, 50, 200] {
        let gs = random_grasps(&mut rng, n);
        assert_eq!(nms_order(&gs, 0.03, PI / 6.0), nms_brute(&gs, 0.03, PI / 6.0));
    }
}

#[test]
fn nms_rejects_bad_thresholds() {
    assert_eq!(nms(&[], 0.0, 1.0).unwrap_err().kind(), "range");
}

#[test]
fn all_perfect_and_empty_ap() {
    let flags = vec![vec![true; 6]; 10];
    assert_eq!(report_from_flags(&flags, &DEFAULT_MU_SET, 10, EvalCounts::default()).target_ap, 1.0);
    assert_eq!(report_from_flags(&[], &DEFAULT_MU_SET, 10, EvalCounts::default()).target_ap, 0.0);
}

#[test]
fn hand_computed_precision_table() {
    let flags: Vec<Vec<bool>> = (0..10).map(|i| vec![i < 5; 6]).collect();
    let r = report_from_flags(&flags, &DEFAULT_MU_SET, 10, EvalCounts::default());
    let table = [1.0, 1.0, 1.0, 1.0, 1.0, 5.0 / 6.0, 5.0 / 7.0, 5.0 / 8.0, 5.0 / 9.0, 0.5];
    for row in &r.precision {
        assert_eq!(row.len(), 10);
        for (a, b) in row.iter().zip(table) {
            assert!((a - b).abs() < 1e-15);
        }
    }
    for ap in r.ap_per_mu {
        assert!((ap - 0.822817).abs() < 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nms_output_is_subset_without_duplicates(seed in any::<u64>(), n in 0usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gs = random_grasps(&mut rng, n);
        let kept = nms(&gs, 0.03, PI / 6.0).unwrap();
        prop_assert!(kept.len() <= gs.len());
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                let close = (a.center - b.center).norm() <= 0.03 && rotation_angle_oracle(a, b) <= PI / 6.0 - 1e-9;
                prop_assert!(!close);
                prop_assert!(a.score >= b.score);
            }
        }
    }

    #[test]
    fn filtered_nms_equals_filter_then_brute(seed in any::<u64>(), n in 0usize..80, limit in 1usize..12, modulus in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gs = random_grasps(&mut rng, n);
        let keep = |g: &GraspPose| ((g.width * 1e4) as usize).is_multiple_of(modulus);
        let survivors: Vec<usize> = (0..gs.len()).filter(|&i| keep(&gs[i])).collect();
        let filtered: Vec<GraspPose> = survivors.iter().map(|&i| gs[i].clone()).collect();
        let want: Vec<usize> = nms_brute(&filtered, 0.03, PI / 6.0).into_iter().take(limit).map(|j| survivors[j]).collect();
        prop_assert_eq!(nms_order_where(&gs, 0.03, PI / 6.0, limit, keep), want);
    }

    #[test]
    fn force_closure_is_monotone_in_mu(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, _) = random_contact_pair(&mut rng);
        let flags: Vec<bool> = DEFAULT_MU_SET.iter().map(|&mu| force_closure(&c, mu)).collect();
        prop_assert!(flags.windows(2).all(|w| !w[0] || w[1]));
    }
}

#[test]
fn grasp_through_sphere_is_on_target_and_closed() {
    use nalgebra::UnitQuaternion;
    use regiongrasp::geom::{top_down_pose, CameraModel};
    use regiongrasp::scene::{rest_on_plane, Scene, Shape};
    let cam = CameraModel { pose: top_down_pose(0.53), ..Default::default() };
    let s = rest_on_plane(3, Shape::Sphere { radius: 0.03, segments: 64 }, UnitQuaternion::identity(), [0.0, 0.0], [1.0; 3]).unwrap();
    let snap = SceneSnapshot::new(Scene::new(vec![s], cam, 0).unwrap());
    let g = GraspPose::from_axes(Vec3::new(0.0, 0.0, 0.5), Vec3::x(), Vec3::z(), 0.07, 1.0).unwrap();
    assert!(on_target(&g, &snap.scene, 3, 0.02));
    assert!(!on_target(&g, &snap.scene, 4, 0.02));
    assert_eq!(min_friction(&g, &snap.scene, &DEFAULT_MU_SET), Some(0.2));
    assert!(!snap.collider.collides(&g, &EvalConfig::default().gripper));
    let (ok, reason, _, _) = judge_grasp(&g, &snap, Some(3), &EvalConfig::default());
    assert!(ok, "{reason}");
    let deep = GraspPose { center: Vec3::new(0.0, 0.0, 0.5), ..g.clone() };
    let buried = GraspPose { center: deep.center + Vec3::new(0.0, 0.0, 0.03), ..deep };
    assert!(snap.collider.collides(&buried, &EvalConfig::default().gripper));
}
