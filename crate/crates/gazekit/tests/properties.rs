//! Property tests for the pipeline's structural invariants.

use proptest::prelude::*;

use gazekit::evalviz::{build_report, med, FrameResult, GroupBy};
use gazekit::ingest::{FrameRecord, GazePoint, Manifest, Orientation, PixelRect};
use gazekit::numerics::LrSchedule;
use gazekit::splits::{apply_filters, google_split, FilterSpec, GOOGLE_SPLIT_RATIOS};

fn arb_orientation() -> impl Strategy<Value = Orientation> {
    prop_oneof![
        Just(Orientation::Portrait),
        Just(Orientation::PortraitUpsideDown),
        Just(Orientation::LandscapeLeft),
        Just(Orientation::LandscapeRight),
    ]
}

prop_compose! {
    fn arb_record()(
        participant in 0u8..6,
        frame in 0u32..500,
        x in -5.0f64..5.0,
        y in -1.0f64..7.0,
        dot in 0i64..12,
        device in 0u8..4,
        orientation in arb_orientation(),
        face_valid in any::<bool>(),
        eyes_valid in any::<bool>(),
        with_corners in any::<bool>(),
    ) -> FrameRecord {
        let devices = ["iPhone 6", "iPhone 5s", "iPad Air", "iPod touch 6"];
        FrameRecord {
            participant_id: format!("p{participant:02}"),
            frame_index: frame,
            image_path: format!("p{participant:02}/frames/{frame:05}.png"),
            gaze: GazePoint::new(x, y),
            dot_id: dot,
            face_box: PixelRect::new(4.0, 4.0, 40.0, 40.0),
            left_eye_box: PixelRect::new(28.0, 16.0, 10.0, 6.0),
            right_eye_box: PixelRect::new(10.0, 16.0, 10.0, 6.0),
            eye_corners: with_corners.then_some(gazekit::ingest::EyeCorners {
                left_inner: [28.5, 19.0],
                left_outer: [37.5, 19.0],
                right_inner: [19.5, 19.0],
                right_outer: [10.5, 19.0],
            }),
            device_model: devices[device as usize].to_string(),
            orientation,
            face_valid,
            eyes_valid,
            image_width: Some(48),
            image_height: Some(48),
            dataset_label: None,
        }
    }
}

fn arb_manifest(max: usize) -> impl Strategy<Value = Manifest> {
    prop::collection::vec(arb_record(), 1..max).prop_map(|mut records| {
        // Deduplicate keys so the manifest invariant holds.
        records.sort_by(|a, b| {
            (a.participant_id.clone(), a.frame_index).cmp(&(b.participant_id.clone(), b.frame_index))
        });
        records.dedup_by_key(|r| (r.participant_id.clone(), r.frame_index));
        Manifest::new(records, "synthetic://".into())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn manifest_round_trips(manifest in arb_manifest(60)) {
        let text = manifest.to_jsonl();
        let reloaded = Manifest::from_jsonl(&text, std::path::Path::new("m.jsonl")).unwrap();
        prop_assert_eq!(manifest.records, reloaded.records);
        prop_assert_eq!(manifest.schema_version, reloaded.schema_version);
    }

    #[test]
    fn filters_never_increase_count(manifest in arb_manifest(60),
                                    face in any::<bool>(),
                                    eyes in any::<bool>(),
                                    mobile in any::<bool>(),
                                    portrait in any::<bool>()) {
        let spec = FilterSpec {
            require_face_valid: face,
            require_eyes_valid: eyes,
            mobile_only: mobile,
            portrait_only: portrait,
            ..FilterSpec::default()
        };
        let filtered = apply_filters(&manifest, &spec).manifest;
        prop_assert!(filtered.len() <= manifest.len());
        // Adding one more predicate can only shrink further.
        let tighter = FilterSpec { require_eyes_valid: true, ..spec };
        prop_assert!(apply_filters(&manifest, &tighter).manifest.len() <= filtered.len());
    }

    #[test]
    fn google_split_covers_and_keeps_dots_atomic(manifest in arb_manifest(80), seed in any::<u64>()) {
        let split = google_split(&manifest, GOOGLE_SPLIT_RATIOS, seed).unwrap();
        prop_assert_eq!(split.assignment.len(), manifest.len());
        let mut dot_split = std::collections::BTreeMap::new();
        for r in &manifest.records {
            let s = split.split_of(&r.key()).unwrap();
            if let Some(prev) = dot_split.insert((r.participant_id.clone(), r.dot_id), s) {
                prop_assert_eq!(prev, s);
            }
        }
        // Determinism in the seed.
        let again = google_split(&manifest, GOOGLE_SPLIT_RATIOS, seed).unwrap();
        prop_assert_eq!(split.assignment, again.assignment);
    }

    #[test]
    fn med_is_permutation_and_translation_invariant(
        pairs in prop::collection::vec(((-5.0f64..5.0, -5.0f64..5.0), (-5.0f64..5.0, -5.0f64..5.0)), 1..20),
        dx in -3.0f64..3.0,
        dy in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let preds: Vec<[f64; 2]> = pairs.iter().map(|(p, _)| [p.0, p.1]).collect();
        let truth: Vec<[f64; 2]> = pairs.iter().map(|(_, t)| [t.0, t.1]).collect();
        let base = med(&preds, &truth).unwrap();

        // Joint translation leaves the metric unchanged.
        let preds_t: Vec<[f64; 2]> = preds.iter().map(|p| [p[0] + dx, p[1] + dy]).collect();
        let truth_t: Vec<[f64; 2]> = truth.iter().map(|t| [t[0] + dx, t[1] + dy]).collect();
        prop_assert!((med(&preds_t, &truth_t).unwrap() - base).abs() < 1e-9);

        // Permutation of the pairs leaves it unchanged.
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut order: Vec<usize> = (0..preds.len()).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let preds_p: Vec<[f64; 2]> = order.iter().map(|&i| preds[i]).collect();
        let truth_p: Vec<[f64; 2]> = order.iter().map(|&i| truth[i]).collect();
        prop_assert!((med(&preds_p, &truth_p).unwrap() - base).abs() < 1e-12);

        // Zero iff elementwise equal.
        prop_assert_eq!(med(&preds, &preds).unwrap(), 0.0);
        if base == 0.0 {
            for (p, t) in preds.iter().zip(&truth) {
                prop_assert_eq!(p, t);
            }
        }
    }

    #[test]
    fn staircase_rate_is_non_increasing(
        initial in 1e-4f64..1.0,
        decay_steps in 1u64..5000,
        decay_rate in 0.1f64..0.99,
        steps in prop::collection::vec(0u64..100_000, 1..40),
    ) {
        let schedule = LrSchedule {
            initial_lr: initial,
            decay_steps,
            decay_rate,
            ..LrSchedule::default()
        };
        let mut sorted = steps;
        sorted.sort_unstable();
        let mut prev = f64::INFINITY;
        for s in sorted {
            let lr = schedule.lr_at(s);
            prop_assert!(lr <= prev + 1e-18);
            prev = lr;
        }
    }

    #[test]
    fn report_nodes_are_weighted_means_of_children(
        errors in prop::collection::vec((0u8..5, 0u8..3, 0.0f64..10.0), 1..60),
    ) {
        let frames: Vec<FrameResult> = errors
            .iter()
            .enumerate()
            .map(|(i, (user, device, err))| FrameResult {
                key: format!("u{user}/{i}"),
                participant: format!("u{user}"),
                device: format!("iPhone {device}"),
                split: "test".to_string(),
                dot_id: 0,
                error_cm: *err,
                is_calibration_dot: false,
            })
            .collect();
        let report = build_report(&frames, &[GroupBy::User, GroupBy::Device]).unwrap();
        prop_assert!(report.check_consistency(1e-9));

        // Aggregation is associative: group-then-merge equals direct.
        let direct: f64 =
            frames.iter().map(|f| f.error_cm).sum::<f64>() / frames.len() as f64;
        prop_assert!((report.med_cm - direct).abs() < 1e-9);
    }
}
