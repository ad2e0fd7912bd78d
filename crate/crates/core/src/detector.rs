//! Detector layer.
//!
//! Two implementations of [`Detector`]:
//!
//! - [`FileDetector`] replays boxes produced elsewhere (for example a real
//!   YOLO run over the decoded frames), NMS-filtered at IoU 0.6.
//! - [`DegradationDetector`] simulates a detector whose frame-level accuracy
//!   follows a PSNR → accuracy curve. Each ground-truth box is detected
//!   independently with a probability chosen by [`calibrate_miss_rate`] so
//!   that the expected fraction of fully-correct frames equals the curve.
//!
//! Simulated output depends only on `(seed, frame_index, psnr rounded to
//! 0.1 dB)`, so queries can run in any order or in parallel.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::boxes::{non_max_suppress, BoundingBox, NMS_IOU_THRESHOLD};
use crate::frameio::FrameAnnotation;
use crate::metrics::PsnrDb;
use crate::{Error, Result};

pub const DEFAULT_SEED: u64 = 42;

pub trait Detector: Send + Sync {
    /// Boxes for one frame, NMS-filtered, with confidences.
    fn detect(&self, frame_index: usize, psnr: PsnrDb) -> Vec<BoundingBox>;
}

pub struct FileDetector {
    frames: HashMap<usize, Vec<BoundingBox>>,
}

impl FileDetector {
    pub fn new(detections: &[FrameAnnotation]) -> Result<Self> {
        let mut frames = HashMap::with_capacity(detections.len());
        for ann in detections {
            let kept = non_max_suppress(&ann.boxes, NMS_IOU_THRESHOLD)?;
            if frames.insert(ann.frame_index, kept).is_some() {
                return Err(Error::Duplicate {
                    frame: ann.frame_index,
                });
            }
        }
        Ok(FileDetector { frames })
    }
}

impl Detector for FileDetector {
    fn detect(&self, frame_index: usize, _psnr: PsnrDb) -> Vec<BoundingBox> {
        self.frames.get(&frame_index).cloned().unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyAnchor {
    pub psnr_db: f64,
    pub accuracy_percent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpAnchor {
    pub psnr_db: f64,
    /// Expected false-positive boxes per frame.
    pub rate: f64,
}

/// PSNR-conditioned detector behaviour. Both anchor lists are interpolated
/// linearly and held constant beyond their end points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorProfile {
    pub curve: Vec<AccuracyAnchor>,
    #[serde(default)]
    pub fp_rate: Vec<FpAnchor>,
    #[serde(default)]
    pub jitter_px: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// Piecewise-linear interpolation over `(x, y)` points with strictly
/// increasing x, clamped at both ends. Infinite x maps to the last point.
fn interpolate(points: impl ExactSizeIterator<Item = (f64, f64)> + Clone, x: f64) -> f64 {
    let mut prev: Option<(f64, f64)> = None;
    for (px, py) in points.clone() {
        if x <= px {
            return match prev {
                None => py,
                Some((qx, qy)) => qy + (py - qy) * (x - qx) / (px - qx),
            };
        }
        prev = Some((px, py));
    }
    prev.map(|(_, y)| y).unwrap_or(0.0)
}

impl DetectorProfile {
    pub fn validate(&self) -> Result<()> {
        if self.curve.is_empty() {
            return Err(Error::Config("profile curve has no anchors".into()));
        }
        for a in &self.curve {
            if !a.psnr_db.is_finite() || !(0.0..=100.0).contains(&a.accuracy_percent) {
                return Err(Error::Config(format!(
                    "bad anchor ({} dB, {}%)",
                    a.psnr_db, a.accuracy_percent
                )));
            }
        }
        for w in self.curve.windows(2) {
            if w[1].psnr_db <= w[0].psnr_db {
                return Err(Error::Config("curve PSNR anchors must strictly increase".into()));
            }
            if w[1].accuracy_percent < w[0].accuracy_percent {
                return Err(Error::Config("curve accuracy must not decrease with PSNR".into()));
            }
        }
        for a in &self.fp_rate {
            if !a.psnr_db.is_finite() || !a.rate.is_finite() || a.rate < 0.0 {
                return Err(Error::Config(format!("bad fp anchor ({} dB, {})", a.psnr_db, a.rate)));
            }
        }
        if self.fp_rate.windows(2).any(|w| w[1].psnr_db <= w[0].psnr_db) {
            return Err(Error::Config("fp_rate PSNR anchors must strictly increase".into()));
        }
        if !self.jitter_px.is_finite() || self.jitter_px < 0.0 {
            return Err(Error::Config(format!("jitter_px {} must be >= 0", self.jitter_px)));
        }
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let p: DetectorProfile =
            serde_json::from_slice(bytes).map_err(|e| Error::Config(format!("profile json: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn accuracy_at(&self, psnr: PsnrDb) -> f64 {
        interpolate(self.curve.iter().map(|a| (a.psnr_db, a.accuracy_percent)), psnr.db())
    }

    pub fn fp_rate_at(&self, psnr: PsnrDb) -> f64 {
        if self.fp_rate.is_empty() {
            return 0.0;
        }
        interpolate(self.fp_rate.iter().map(|a| (a.psnr_db, a.rate)), psnr.db())
    }
}

/// Built-in profiles: 98% at and above 43 dB, falling linearly to 60%
/// (`scenario1`) or 55% (`scenario2`) at 30 dB. No false positives.
pub fn scenario_profile(name: &str) -> Result<DetectorProfile> {
    let low = match name {
        "scenario1" => 60.0,
        "scenario2" => 55.0,
        other => return Err(Error::Config(format!("unknown scenario `{other}`"))),
    };
    let anchor = |psnr_db, accuracy_percent| AccuracyAnchor {
        psnr_db,
        accuracy_percent,
    };
    Ok(DetectorProfile {
        curve: vec![anchor(30.0, low), anchor(43.0, 98.0), anchor(56.0, 98.0)],
        fp_rate: Vec::new(),
        jitter_px: 2.0,
        seed: DEFAULT_SEED,
    })
}

/// Per-box detection probability `p` such that `p^k * exp(-fp_rate)`, the
/// chance that all `k` boxes are found and no false positive appears, equals
/// `target_accuracy_percent / 100`.
///
/// For `k = 0` the result is unused and 1 is returned.
pub fn calibrate_miss_rate(target_accuracy_percent: f64, boxes_per_frame: usize, fp_rate: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&target_accuracy_percent) {
        return Err(Error::Domain(format!(
            "target accuracy {target_accuracy_percent} outside [0, 100]"
        )));
    }
    if !fp_rate.is_finite() || fp_rate < 0.0 {
        return Err(Error::Domain(format!("fp_rate {fp_rate} must be >= 0")));
    }
    if boxes_per_frame == 0 {
        return Ok(1.0);
    }
    let target = target_accuracy_percent / 100.0;
    let no_fp = (-fp_rate).exp();
    if target > no_fp {
        return Err(Error::Infeasible(format!(
            "target {target_accuracy_percent}% exceeds the false-positive ceiling {:.4}%",
            no_fp * 100.0
        )));
    }
    Ok((target / no_fp).powf(1.0 / boxes_per_frame as f64).min(1.0))
}

/// PSNR bucket key at 0.1 dB resolution.
fn psnr_key(psnr: PsnrDb) -> i64 {
    if psnr.is_infinite() {
        i64::MAX
    } else {
        (psnr.db() * 10.0).round() as i64
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn frame_seed(seed: u64, frame_index: usize, key: i64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ frame_index as u64) ^ key as u64)
}

pub struct DegradationDetector {
    profile: DetectorProfile,
    ground_truth: HashMap<usize, Vec<BoundingBox>>,
    width: f64,
    height: f64,
}

const FP_PLACEMENT_ATTEMPTS: usize = 64;

impl DegradationDetector {
    pub fn new(profile: DetectorProfile, ground_truth: &[FrameAnnotation], width: u32, height: u32) -> Result<Self> {
        profile.validate()?;
        let mut gt = HashMap::with_capacity(ground_truth.len());
        for ann in ground_truth {
            if gt.insert(ann.frame_index, ann.boxes.clone()).is_some() {
                return Err(Error::Duplicate {
                    frame: ann.frame_index,
                });
            }
        }
        Ok(DegradationDetector {
            profile,
            ground_truth: gt,
            width: width as f64,
            height: height as f64,
        })
    }

    pub fn profile(&self) -> &DetectorProfile {
        &self.profile
    }

    fn jitter(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.profile.jitter_px * (2.0 * rng.random::<f64>() - 1.0)
    }

    /// Random box of `(w, h)` inside the frame that touches none of `taken`.
    fn place_false_positive(&self, rng: &mut ChaCha8Rng, w: f64, h: f64, taken: &[BoundingBox]) -> Option<BoundingBox> {
        if w >= self.width || h >= self.height {
            return None;
        }
        for _ in 0..FP_PLACEMENT_ATTEMPTS {
            let x = rng.random::<f64>() * (self.width - w);
            let y = rng.random::<f64>() * (self.height - h);
            let conf = rng.random_range(0.6..=0.9);
            let candidate = BoundingBox::new(x, y, w, h).ok()?.with_conf(conf).ok()?;
            if taken.iter().all(|t| t.intersection_area(&candidate) == 0.0) {
                return Some(candidate);
            }
        }
        None
    }
}

impl Detector for DegradationDetector {
    fn detect(&self, frame_index: usize, psnr: PsnrDb) -> Vec<BoundingBox> {
        let key = psnr_key(psnr);
        let bucket = if key == i64::MAX {
            PsnrDb::INFINITE
        } else {
            PsnrDb::finite((key as f64 / 10.0).max(0.0)).unwrap_or(PsnrDb::INFINITE)
        };
        let gt = self.ground_truth.get(&frame_index).map(Vec::as_slice).unwrap_or(&[]);
        let target = self.profile.accuracy_at(bucket);
        let fp_rate = self.profile.fp_rate_at(bucket);
        // unreachable targets fall back to perfect box recall
        let p_det = calibrate_miss_rate(target, gt.len(), fp_rate).unwrap_or(1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(self.profile.seed, frame_index, key));
        let mut out = Vec::with_capacity(gt.len());
        for g in gt {
            // draw every variate so later boxes see the same stream regardless of hits
            let hit = rng.random::<f64>() < p_det;
            let (dx, dy, dw, dh) = (self.jitter(&mut rng), self.jitter(&mut rng), self.jitter(&mut rng), self.jitter(&mut rng));
            let conf = rng.random_range(0.7..=1.0);
            if hit {
                out.push(BoundingBox {
                    x: g.x + dx,
                    y: g.y + dy,
                    w: (g.w + dw).max(1.0),
                    h: (g.h + dh).max(1.0),
                    conf: Some(conf),
                    class_label: g.class_label.clone(),
                });
            }
        }

        if fp_rate > 0.0 {
            let count = Poisson::new(fp_rate).map(|d| d.sample(&mut rng) as usize).unwrap_or(0);
            let (w, h) = gt
                .first()
                .map(|g| (g.w, g.h))
                .unwrap_or((self.width / 8.0, self.height / 4.0));
            let mut taken: Vec<BoundingBox> = gt.iter().chain(out.iter()).cloned().collect();
            for _ in 0..count {
                if let Some(fp) = self.place_false_positive(&mut rng, w, h, &taken) {
                    taken.push(fp.clone());
                    out.push(fp);
                }
            }
        }

        non_max_suppress(&out, NMS_IOU_THRESHOLD).expect("simulated boxes always carry conf")
    }
}
