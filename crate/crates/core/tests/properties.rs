use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use segfuse::codec::{decode_sgm, encode_sgm, AnyVolume};
use segfuse::metrics::summary_stats;
use segfuse::overlay::{render_overlay, BLUE, GREEN, RED};
use segfuse::preprocess::{affine_augment_mask, crop_pad_center, zscore_normalize, AffineRanges, ParamRange};
use segfuse::simulator::{CohortSpec, LesionSpec, ModelQuality};
use segfuse::{
    count_foreground, dsc, fuse_mbm, fuse_msm, overlap_count, BinaryMask, IntensityMap, Raster, ScoreMap,
    Threshold, Volume, VolumeKind,
};

fn half() -> Threshold {
    Threshold::new(0.5).unwrap()
}

fn mask_pair() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    (1usize..24, 1usize..24).prop_flat_map(|(w, h)| {
        let bits = prop::collection::vec(0u8..=1, w * h);
        (bits.clone(), bits).prop_map(move |(a, b)| {
            (BinaryMask::new(w, h, a).unwrap(), BinaryMask::new(w, h, b).unwrap())
        })
    })
}

fn score_value() -> impl Strategy<Value = f32> {
    prop_oneof![0.0f32..=1.0, (0u8..=10).prop_map(|i| f32::from(i) / 10.0), Just(0.5f32)]
}

/// `n` score maps sharing one shape.
fn score_maps(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<ScoreMap>> {
    (1usize..8, 1usize..8, n).prop_flat_map(|(w, h, n)| {
        prop::collection::vec(prop::collection::vec(score_value(), w * h), n)
            .prop_map(move |maps| maps.into_iter().map(|d| ScoreMap::new(w, h, d).unwrap()).collect())
    })
}

fn intensity_map() -> impl Strategy<Value = IntensityMap> {
    (1usize..16, 1usize..16).prop_flat_map(|(w, h)| {
        prop::collection::vec(-1000.0f32..1000.0, w * h).prop_map(move |d| IntensityMap::new(w, h, d).unwrap())
    })
}

proptest! {
    #[test]
    fn overlap_is_symmetric_and_bounded((a, b) in mask_pair()) {
        let ab = overlap_count(&a, &b).unwrap();
        prop_assert_eq!(ab, overlap_count(&b, &a).unwrap());
        prop_assert_eq!(overlap_count(&a, &a).unwrap(), count_foreground(&a));
        prop_assert!(ab <= count_foreground(&a).min(count_foreground(&b)));
    }

    #[test]
    fn dsc_symmetric_and_in_range((a, b) in mask_pair()) {
        let d = dsc(&a, &b).unwrap();
        prop_assert_eq!(d, dsc(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(dsc(&a, &a).unwrap(), 1.0);
        let (na, nb, nab) = (count_foreground(&a), count_foreground(&b), overlap_count(&a, &b).unwrap());
        let oracle = if na + nb == 0 { 1.0 } else { 2.0 * nab as f64 / (na + nb) as f64 };
        prop_assert_eq!(d, oracle);
    }

    #[test]
    fn fusion_is_permutation_invariant(maps in score_maps(1..6), seed in any::<u64>()) {
        let mut shuffled = maps.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        prop_assert_eq!(fuse_msm(&maps, half()).unwrap(), fuse_msm(&shuffled, half()).unwrap());
        prop_assert_eq!(fuse_mbm(&maps, half()).unwrap(), fuse_mbm(&shuffled, half()).unwrap());
    }

    #[test]
    fn fusion_matches_oracles(maps in score_maps(1..6)) {
        let msm = fuse_msm(&maps, half()).unwrap();
        let mbm = fuse_mbm(&maps, half()).unwrap();
        let n = maps.len();
        for i in 0..maps[0].pixels().len() {
            let vals: Vec<f32> = maps.iter().map(|m| m.pixels()[i]).collect();
            let votes = vals.iter().filter(|&&v| v > 0.5).count();
            prop_assert_eq!(mbm.pixels()[i], (2 * votes > n) as u8);
            let mean = vals.iter().map(|&v| f64::from(v)).sum::<f64>() / n as f64;
            prop_assert_eq!(msm.pixels()[i], (mean > 0.5) as u8);
        }
    }

    #[test]
    fn unanimity_is_preserved(maps in score_maps(1..6)) {
        let msm = fuse_msm(&maps, half()).unwrap();
        let mbm = fuse_mbm(&maps, half()).unwrap();
        for i in 0..maps[0].pixels().len() {
            if maps.iter().all(|m| m.pixels()[i] > 0.5) {
                prop_assert_eq!((msm.pixels()[i], mbm.pixels()[i]), (1, 1));
            }
            if maps.iter().all(|m| m.pixels()[i] <= 0.5) {
                prop_assert_eq!((msm.pixels()[i], mbm.pixels()[i]), (0, 0));
            }
        }
    }

    #[test]
    fn fusion_is_monotone(maps in score_maps(1..6), bump in 0.0f32..=1.0, which in any::<prop::sample::Index>()) {
        let k = which.index(maps.len());
        let mut raised = maps.clone();
        let data = raised[k].pixels().iter().map(|&v| (v + bump).min(1.0)).collect();
        raised[k] = ScoreMap::new(maps[k].width(), maps[k].height(), data).unwrap();
        let le = |a: &BinaryMask, b: &BinaryMask| a.pixels().iter().zip(b.pixels()).all(|(x, y)| x <= y);
        prop_assert!(le(&fuse_msm(&maps, half()).unwrap(), &fuse_msm(&raised, half()).unwrap()));
        prop_assert!(le(&fuse_mbm(&maps, half()).unwrap(), &fuse_mbm(&raised, half()).unwrap()));
    }

    #[test]
    fn methods_agree_on_binary_inputs_with_odd_count(
        (w, h, n) in (1usize..8, 1usize..8, prop_oneof![Just(1usize), Just(3), Just(5)]),
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let maps: Vec<ScoreMap> = (0..n)
            .map(|_| ScoreMap::new(w, h, (0..w * h).map(|_| f32::from(rng.gen::<bool>() as u8)).collect()).unwrap())
            .collect();
        prop_assert_eq!(fuse_msm(&maps, half()).unwrap(), fuse_mbm(&maps, half()).unwrap());
    }

    #[test]
    fn stats_are_ordered(values in prop::collection::vec(-10.0f64..10.0, 1..50)) {
        let s = summary_stats(&values).unwrap();
        prop_assert!(s.min <= s.q25 && s.q25 <= s.median && s.median <= s.q75 && s.q75 <= s.max);
        prop_assert!(s.min <= s.mean && s.mean <= s.max);
    }

    #[test]
    fn crop_pad_round_trip(img in intensity_map(), dw in 0usize..9, dh in 0usize..9) {
        let (w, h) = (img.width(), img.height());
        let padded = crop_pad_center(&img, w + dw, h + dh, 0.0).unwrap();
        prop_assert_eq!((padded.width(), padded.height()), (w + dw, h + dh));
        prop_assert_eq!(crop_pad_center(&padded, w, h, 0.0).unwrap(), img);
    }

    #[test]
    fn zscore_moments_and_idempotence(img in intensity_map()) {
        let z = zscore_normalize(&img);
        let vals: Vec<f64> = z.pixels().iter().map(|&v| f64::from(v)).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() < 1e-6, "mean {}", mean);
        prop_assert!(std.abs() < 1e-6 || (std - 1.0).abs() < 1e-6, "std {}", std);
        let zz = zscore_normalize(&z);
        for (a, b) in z.pixels().iter().zip(zz.pixels()) {
            prop_assert!((a - b).abs() < 1e-5, "{} vs {}", a, b);
        }
    }

    #[test]
    fn augmented_labels_stay_binary((a, _) in mask_pair(), seed in any::<u64>()) {
        let ranges = AffineRanges {
            rotation_deg: ParamRange { lo: -180.0, hi: 180.0 },
            shear_x: ParamRange { lo: -0.4, hi: 0.4 },
            shear_y: ParamRange { lo: -0.4, hi: 0.4 },
            scale_x: ParamRange { lo: 0.5, hi: 2.0 },
            scale_y: ParamRange { lo: 0.5, hi: 2.0 },
        };
        let params = ranges.sample(&mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let out = affine_augment_mask(&a, &params);
        prop_assert_eq!(out.shape(), a.shape());
        prop_assert!(out.pixels().iter().all(|&v| v <= 1));
    }

    #[test]
    fn sgm_round_trips(maps in score_maps(1..4), (m, _) in mask_pair()) {
        let scores = Volume::new(maps).unwrap();
        let bytes = encode_sgm(&scores);
        let decoded = decode_sgm(&bytes, VolumeKind::Score).unwrap();
        prop_assert_eq!(&decoded, &AnyVolume::Score(scores));
        let AnyVolume::Score(s) = decoded else { unreachable!() };
        prop_assert_eq!(encode_sgm(&s), bytes);

        let masks = Volume::single(m);
        let bytes = encode_sgm(&masks);
        prop_assert_eq!(decode_sgm(&bytes, VolumeKind::Mask).unwrap(), AnyVolume::Mask(masks));
    }

    #[test]
    fn overlay_color_counts((gs, seg) in mask_pair(), seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (gs.width(), gs.height());
        let bg = IntensityMap::new(w, h, (0..w * h).map(|_| rng.gen_range(0.0..100.0)).collect()).unwrap();
        let img = render_overlay(&bg, &gs, &seg).unwrap();
        let both = overlap_count(&gs, &seg).unwrap() as usize;
        prop_assert_eq!(img.count_color(GREEN), both);
        prop_assert_eq!(img.count_color(RED), count_foreground(&gs) as usize - both);
        prop_assert_eq!(img.count_color(BLUE), count_foreground(&seg) as usize - both);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn simulator_is_deterministic(seed in any::<u64>(), depth in 1usize..3) {
        let spec = CohortSpec {
            subjects: 2,
            depth,
            lesions: LesionSpec::for_size(32).unwrap(),
            qualities: vec![ModelQuality::GOOD, ModelQuality::BAD],
            base_seed: seed,
        };
        let a = spec.simulate().unwrap();
        let b = spec.simulate().unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.subject_id, &y.subject_id);
            prop_assert_eq!(&x.gt, &y.gt);
            prop_assert_eq!(&x.models, &y.models);
        }
    }
}
