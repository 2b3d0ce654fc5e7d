mod common;

use std::f64::consts::FRAC_PI_2;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regiongrasp::codec::*;
use regiongrasp::geom::{CameraModel, RegionGrasp, Vec3, OFFSET_LIMIT};
use regiongrasp::guidance::{extract_patches, mask_to_centers};
use regiongrasp::scene::{default_library, generate_clutter, render};

/// Grasps the codec can represent exactly: beta and gamma on anchors.
fn representable(rng: &mut impl Rng, codec: &Codec) -> RegionGrasp {
    RegionGrasp {
        dt: Vec3::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)) * OFFSET_LIMIT,
        theta: rng.random_range(-FRAC_PI_2..=FRAC_PI_2),
        beta: codec.anchors.beta_anchors[rng.random_range(0..N_ANCHORS)],
        gamma: codec.anchors.gamma_anchors[rng.random_range(0..N_ANCHORS)],
        width: rng.random_range(0.0..=codec.max_width),
        score: 1.0,
    }
}

#[test]
fn roundtrip_is_exact_on_representable_grasps() {
    let codec = Codec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..1000 {
        let g = representable(&mut rng, &codec);
        let out = codec.idealize(&codec.encode(&g).unwrap());
        let top = &codec.decode_region(&out, 1).unwrap()[0];
        assert_eq!(top.dt, g.dt);
        assert!((top.theta - g.theta).abs() < 1e-9);
        assert_eq!((top.beta, top.gamma), (g.beta, g.gamma));
        assert!((top.width - g.width).abs() < 1e-15);
    }
}

#[test]
fn decode_never_exceeds_bounds() {
    let codec = Codec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let flat: Vec<f64> = (0..N_OUTPUTS).map(|_| rng.random_range(-20.0..20.0)).collect();
        let out = HeadOutputs::from_flat(&flat).unwrap();
        let gs = codec.decode_region(&out, 100).unwrap();
        assert_eq!(gs.len(), N_CANDIDATES);
        for g in &gs {
            assert!(g.dt.amax() <= OFFSET_LIMIT);
            assert!((0.0..=0.085).contains(&g.width));
        }
        assert!(gs.windows(2).all(|w| w[0].score >= w[1].score));
    }
}

fn random_outputs_and_targets(rng: &mut impl Rng, codec: &Codec, beta: f64) -> (HeadOutputs, HeadTargets) {
    let g = RegionGrasp {
        dt: Vec3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02)),
        theta: rng.random_range(-1.5..1.5),
        beta: rng.random_range(-1.5..1.5),
        gamma: rng.random_range(-1.5..1.5),
        width: rng.random_range(0.0..0.085),
        score: 1.0,
    };
    let t = codec.encode(&g).unwrap();
    // Keep regression differences away from the smooth-L1 kink.
    let away = |rng: &mut dyn rand::RngCore, target: f64| loop {
        let x: f64 = target + rng.random_range(-3.0..3.0);
        if ((x - target).abs() - beta).abs() > 1e-3 {
            return x;
        }
    };
    let mut out = HeadOutputs::zeros();
    for k in 0..THETA_BINS {
        out.theta_logits[k] = rng.random_range(-4.0..4.0);
        out.theta_residuals[k] = away(rng, t.theta_residual);
    }
    for i in 0..N_ANCHORS {
        out.beta_logits[i] = rng.random_range(-4.0..4.0);
        out.gamma_logits[i] = rng.random_range(-4.0..4.0);
    }
    for i in 0..3 {
        out.offset_raw[i] = away(rng, t.offset[i]);
    }
    out.width_raw = away(rng, t.width_norm);
    (out, t)
}

#[test]
fn loss_gradient_matches_central_differences() {
    let codec = Codec::default();
    let cfg = LossConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (out, t) = random_outputs_and_targets(&mut rng, &codec, cfg.smooth_l1_beta);
        let analytic = loss_total(&out, &t, &cfg).grad.to_flat();
        let flat = out.to_flat();
        for j in 0..N_OUTPUTS {
            let mut plus = flat.clone();
            let mut minus = flat.clone();
            plus[j] += h;
            minus[j] -= h;
            let lp = loss_total(&HeadOutputs::from_flat(&plus).unwrap(), &t, &cfg).total;
            let lm = loss_total(&HeadOutputs::from_flat(&minus).unwrap(), &t, &cfg).total;
            let numeric = (lp - lm) / (2.0 * h);
            let scale = analytic[j].abs().max(numeric.abs());
            if scale > 1e-8 {
                worst = worst.max((analytic[j] - numeric).abs() / scale);
            }
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn unit_focal_with_zero_exponent_is_bce() {
    let focal = FocalLoss { alpha: None, gamma: 0.0 };
    for i in -400..=400 {
        let x = i as f64 * 0.05;
        for pos in [true, false] {
            assert!((focal.eval(x, pos).0 - binary_cross_entropy(x, pos)).abs() < 1e-9);
        }
    }
}

#[test]
fn same_batch_normalization_is_standard() {
    let scene = generate_clutter(3, 6, &default_library(), CameraModel::default()).unwrap();
    let img = render(&scene);
    let mask: Vec<bool> = img.ids.iter().map(|&id| id != regiongrasp::scene::NO_OBJECT).collect();
    let centers = mask_to_centers(&mask, &img, &scene.camera, 16, 2).unwrap().centers;
    let (patches, _) = extract_patches(&img, &scene.camera, &centers, 0.08, 32);
    let stats = compute_modality_stats(&patches).unwrap();
    let mix = MixingWeights::default();
    let mut channels: Vec<Vec<f64>> = vec![Vec::new(); 6];
    for p in &patches {
        let z = standardize(p, &stats, &mix).unwrap();
        let hw = p.size * p.size;
        for j in (0..hw).filter(|&j| p.valid[j]) {
            for c in 0..6 {
                channels[c].push(z[c * hw + j]);
            }
        }
        assert!(dedifferentiate(p, &stats, &mix).unwrap().iter().all(|&x| x >= 0.0));
    }
    for ch in &channels {
        let (m, v) = mean_var(ch);
        assert!(m.abs() < 1e-6 && (v - 1.0).abs() < 1e-6, "mean {m} var {v}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn flat_outputs_roundtrip(v in proptest::collection::vec(-50.0f64..50.0, N_OUTPUTS)) {
        let out = HeadOutputs::from_flat(&v).unwrap();
        prop_assert_eq!(out.to_flat(), v);
    }

    #[test]
    fn encoded_offsets_and_width_are_normalized(seed in any::<u64>()) {
        let codec = Codec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = representable(&mut rng, &codec);
        let t = codec.encode(&g).unwrap();
        prop_assert!(t.offset.iter().all(|o| o.abs() <= 1.0));
        prop_assert!((0.0..=1.0).contains(&t.width_norm));
        prop_assert!(t.beta_labels.iter().filter(|&&b| b).count() == 1);
    }
}
