use pedlink::boxes::{iou, BoundingBox, NMS_IOU_THRESHOLD};
use pedlink::detector::{
    calibrate_miss_rate, scenario_profile, AccuracyAnchor, DegradationDetector, Detector, DetectorProfile, FileDetector,
    FpAnchor,
};
use pedlink::eval::{match_frame, MatchRule};
use pedlink::frameio::FrameAnnotation;
use pedlink::metrics::PsnrDb;
use proptest::prelude::*;

const W: u32 = 160;
const H: u32 = 96;

/// `k` pedestrian boxes side by side, far enough apart that jitter never
/// makes them compete for a detection.
fn ground_truth(frames: usize, k: usize) -> Vec<FrameAnnotation> {
    (0..frames)
        .map(|i| FrameAnnotation {
            frame_index: i,
            boxes: (0..k)
                .map(|j| BoundingBox::new(10.0 + 40.0 * j as f64 + (i % 7) as f64, 30.0, 16.0, 32.0).unwrap())
                .collect(),
        })
        .collect()
}

fn measured_accuracy(det: &dyn Detector, gt: &[FrameAnnotation], psnr: f64) -> f64 {
    let p = PsnrDb::finite(psnr).unwrap();
    let correct = gt
        .iter()
        .filter(|a| match_frame(a.frame_index, &a.boxes, &det.detect(a.frame_index, p), MatchRule::default()).correct)
        .count();
    100.0 * correct as f64 / gt.len() as f64
}

#[test]
fn detector_is_deterministic() {
    let gt = ground_truth(200, 2);
    let a = DegradationDetector::new(scenario_profile("scenario1").unwrap(), &gt, W, H).unwrap();
    let b = DegradationDetector::new(scenario_profile("scenario1").unwrap(), &gt, W, H).unwrap();
    let mut reseeded_profile = scenario_profile("scenario1").unwrap();
    reseeded_profile.seed = 7;
    let c = DegradationDetector::new(reseeded_profile, &gt, W, H).unwrap();
    let p = PsnrDb::finite(33.0).unwrap();
    let mut differs = false;
    for i in 0..200 {
        assert_eq!(a.detect(i, p), b.detect(i, p));
        differs |= a.detect(i, p) != c.detect(i, p);
    }
    assert!(differs, "seed has no effect");
}

#[test]
fn accuracy_is_statistically_monotone_in_psnr() {
    // flat stretches of the curve compare equal-valued levels; 2e4 frames
    // keeps their sampling spread near 0.5 points against the 2-point slack
    let gt = ground_truth(20_000, 1);
    for name in ["scenario1", "scenario2"] {
        let det = DegradationDetector::new(scenario_profile(name).unwrap(), &gt, W, H).unwrap();
        let levels: Vec<f64> = (0..=14).map(|i| 26.0 + 2.0 * i as f64).collect();
        let acc: Vec<f64> = levels.iter().map(|&p| measured_accuracy(&det, &gt, p)).collect();
        for i in 0..levels.len() {
            for j in 0..i {
                assert!(acc[i] >= acc[j] - 2.0, "{name}: {} dB {} < {} dB {}", levels[i], acc[i], levels[j], acc[j]);
            }
        }
    }
}

fn check_anchors(profile: DetectorProfile, k: usize) {
    let gt = ground_truth(4000, k);
    let det = DegradationDetector::new(profile.clone(), &gt, W, H).unwrap();
    for a in &profile.curve {
        let measured = measured_accuracy(&det, &gt, a.psnr_db);
        assert!(
            (measured - a.accuracy_percent).abs() <= 2.0,
            "k={k} anchor {} dB: target {} measured {measured}",
            a.psnr_db,
            a.accuracy_percent
        );
    }
}

#[test]
fn scenario_anchors_are_met() {
    for name in ["scenario1", "scenario2"] {
        for k in [1, 2, 3] {
            check_anchors(scenario_profile(name).unwrap(), k);
        }
    }
}

#[test]
fn anchors_with_false_positives_are_met() {
    let profile = DetectorProfile {
        curve: vec![
            AccuracyAnchor { psnr_db: 30.0, accuracy_percent: 50.0 },
            AccuracyAnchor { psnr_db: 45.0, accuracy_percent: 85.0 },
        ],
        fp_rate: vec![FpAnchor { psnr_db: 30.0, rate: 0.3 }, FpAnchor { psnr_db: 45.0, rate: 0.1 }],
        jitter_px: 1.5,
        seed: 3,
    };
    check_anchors(profile.clone(), 1);
    check_anchors(profile, 2);
}

#[test]
fn plateau_gives_p_of_0_98_for_one_box() {
    let profile = scenario_profile("scenario1").unwrap();
    let above = PsnrDb::finite(60.0).unwrap();
    let p = calibrate_miss_rate(profile.accuracy_at(above), 1, profile.fp_rate_at(above)).unwrap();
    assert!((p - 0.98).abs() < 1e-12);
}

fn arb_detections() -> impl Strategy<Value = Vec<FrameAnnotation>> {
    let scored = (0.0..50.0f64, 0.0..50.0f64, 1.0..30.0f64, 1.0..30.0f64, 0.0..=1.0f64)
        .prop_map(|(x, y, w, h, c)| BoundingBox::new(x, y, w, h).unwrap().with_conf(c).unwrap());
    prop::collection::vec(prop::collection::vec(scored, 0..8), 1..6).prop_map(|frames| {
        frames
            .into_iter()
            .enumerate()
            .map(|(i, boxes)| FrameAnnotation { frame_index: i, boxes })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn file_detector_output_obeys_nms(dets in arb_detections(), psnr in 20.0..60.0f64) {
        let fd = FileDetector::new(&dets).unwrap();
        for ann in &dets {
            let out = fd.detect(ann.frame_index, PsnrDb::finite(psnr).unwrap());
            prop_assert!(out.len() <= ann.boxes.len());
            for (i, a) in out.iter().enumerate() {
                for b in &out[i + 1..] {
                    prop_assert!(iou(a, b) <= NMS_IOU_THRESHOLD);
                }
            }
        }
        // frames absent from the file yield nothing
        prop_assert!(fd.detect(dets.len() + 10, PsnrDb::INFINITE).is_empty());
    }

    #[test]
    fn calibration_closed_form(target in 0.0..=100.0f64, k in 1usize..6, fp in 0.0..0.5f64) {
        match calibrate_miss_rate(target, k, fp) {
            Ok(p) => {
                prop_assert!((0.0..=1.0).contains(&p));
                let achieved = p.powi(k as i32) * (-fp).exp() * 100.0;
                prop_assert!((achieved - target).abs() < 1e-9);
            }
            Err(e) => {
                prop_assert_eq!(e.code(), "infeasible");
                prop_assert!(target / 100.0 > (-fp).exp());
            }
        }
    }
}

