//! Frame matching, frame-level accuracy, quality sweeps and the operating
//! threshold search.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::Serialize;

use crate::boxes::{iou, BoundingBox};
use crate::codec::{decode_sequence, encode_sequence_with, QualityLevel};
use crate::detector::Detector;
use crate::exec::Execution;
use crate::frameio::{FrameAnnotation, VideoSequence};
use crate::metrics::{average_psnr_with, required_bandwidth, BandwidthSample, PsnrDb};
use crate::{Error, Result};

pub const DEFAULT_MATCH_IOU: f64 = 0.5;

pub const SWEEP_CSV_HEADER: &str =
    "crf,avg_psnr_db,accuracy_percent,correct_frames,total_frames,size_bits,duration_s,bandwidth_mbps";

/// When a detection counts as finding a ground-truth box, and whether
/// leftover detections spoil the frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchRule {
    pub match_iou: f64,
    /// Sensitivity switch: ignore unmatched detections when judging a frame.
    pub allow_fp: bool,
}

impl Default for MatchRule {
    fn default() -> Self {
        MatchRule {
            match_iou: DEFAULT_MATCH_IOU,
            allow_fp: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    pub gt_index: usize,
    pub det_index: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameVerdict {
    pub frame_index: usize,
    pub matched_pairs: Vec<MatchedPair>,
    pub false_negatives: usize,
    pub false_positives: usize,
    pub correct: bool,
}

fn geometry_cmp(a: &BoundingBox, b: &BoundingBox) -> Ordering {
    a.x.total_cmp(&b.x)
        .then(a.y.total_cmp(&b.y))
        .then(a.w.total_cmp(&b.w))
        .then(a.h.total_cmp(&b.h))
}

/// Greedy matching: detections in descending confidence each claim the
/// unmatched ground-truth box with the highest IoU, if that IoU is at least
/// `rule.match_iou`. IoU ties go to the geometrically smallest box so the
/// verdict never depends on ground-truth order.
pub fn match_frame(frame_index: usize, gt: &[BoundingBox], det: &[BoundingBox], rule: MatchRule) -> FrameVerdict {
    let mut order: Vec<usize> = (0..det.len()).collect();
    order.sort_by(|&a, &b| {
        let ca = det[a].conf.unwrap_or(0.0);
        let cb = det[b].conf.unwrap_or(0.0);
        cb.total_cmp(&ca)
    });

    let mut gt_taken = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for d in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gbox) in gt.iter().enumerate() {
            if gt_taken[g] {
                continue;
            }
            let v = iou(gbox, &det[d]);
            if v < rule.match_iou {
                continue;
            }
            let better = match best {
                None => true,
                Some((bg, bv)) => v > bv || (v == bv && geometry_cmp(gbox, &gt[bg]) == Ordering::Less),
            };
            if better {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            gt_taken[g] = true;
            pairs.push(MatchedPair {
                gt_index: g,
                det_index: d,
                iou: v,
            });
        }
    }
    let false_negatives = gt.len() - pairs.len();
    let false_positives = det.len() - pairs.len();
    FrameVerdict {
        frame_index,
        matched_pairs: pairs,
        false_negatives,
        false_positives,
        correct: false_negatives == 0 && (rule.allow_fp || false_positives == 0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracyResult {
    pub correct_frames: usize,
    pub total_frames: usize,
    pub accuracy_percent: f64,
}

impl AccuracyResult {
    /// `A = x / n * 100`, computed as `(100 x) / n` to round once.
    pub fn new(correct_frames: usize, total_frames: usize) -> Result<Self> {
        if total_frames == 0 {
            return Err(Error::EmptyInput("accuracy over zero frames"));
        }
        if correct_frames > total_frames {
            return Err(Error::Invalid(format!("{correct_frames} correct of {total_frames} frames")));
        }
        Ok(AccuracyResult {
            correct_frames,
            total_frames,
            accuracy_percent: (correct_frames as f64 * 100.0) / total_frames as f64,
        })
    }
}

pub fn accuracy(verdicts: &[FrameVerdict]) -> Result<AccuracyResult> {
    AccuracyResult::new(verdicts.iter().filter(|v| v.correct).count(), verdicts.len())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub crf: QualityLevel,
    pub avg_psnr: PsnrDb,
    pub accuracy: AccuracyResult,
    pub bandwidth: BandwidthSample,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    pub rule: MatchRule,
    pub exec: Execution,
}

/// Checks that `gt` has exactly one entry for each frame in `0..frames`
/// and that every box fits inside the frame.
pub fn check_coverage(gt: &[FrameAnnotation], frames: usize, width: u32, height: u32) -> Result<()> {
    let mut present = vec![false; frames];
    for ann in gt {
        if ann.frame_index >= frames {
            return Err(Error::Invalid(format!(
                "ground truth names frame {} but the video has {frames} frames",
                ann.frame_index
            )));
        }
        if present[ann.frame_index] {
            return Err(Error::Duplicate {
                frame: ann.frame_index,
            });
        }
        present[ann.frame_index] = true;
        ann.check_bounds(width, height)?;
    }
    match present.iter().position(|p| !p) {
        Some(frame) => Err(Error::Coverage { frame }),
        None => Ok(()),
    }
}

/// Encodes, decodes and evaluates the sequence once per quality level.
///
/// The detector is queried with the level's average PSNR. Bandwidth uses
/// the sequence duration `frames / fps`. Records come back sorted by crf
/// with duplicates removed.
pub fn run_sweep(
    seq: &VideoSequence,
    gt: &[FrameAnnotation],
    detector: &dyn Detector,
    grid: &[QualityLevel],
    opts: SweepOptions,
) -> Result<Vec<SweepRecord>> {
    if seq.is_empty() {
        return Err(Error::EmptyInput("sweep over an empty sequence"));
    }
    if grid.is_empty() {
        return Err(Error::EmptyInput("empty quality grid"));
    }
    check_coverage(gt, seq.len(), seq.width(), seq.height())?;
    let mut by_frame: Vec<&[BoundingBox]> = vec![&[]; seq.len()];
    for ann in gt {
        by_frame[ann.frame_index] = &ann.boxes;
    }
    let mut levels = grid.to_vec();
    levels.sort();
    levels.dedup();

    let exec = opts.exec;
    exec.try_map(&levels, |&q| {
        let encoded = encode_sequence_with(seq, q, exec)?;
        let decoded = decode_sequence(&encoded.frames, seq.fps(), exec)?;
        let avg = average_psnr_with(seq, &decoded, exec)?.value;
        let verdicts = exec.map_range(0..seq.len(), |i| {
            let det = detector.detect(i, avg);
            match_frame(i, by_frame[i], &det, opts.rule)
        });
        Ok(SweepRecord {
            crf: q,
            avg_psnr: avg,
            accuracy: accuracy(&verdicts)?,
            bandwidth: required_bandwidth(encoded.total_size_bits, seq.duration_s())?,
        })
    })
}

/// Cheapest record whose accuracy meets the floor. Bandwidth ties go to the
/// lower PSNR, then the lower crf.
pub fn find_threshold(records: &[SweepRecord], accuracy_floor_percent: f64) -> Result<SweepRecord> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no sweep records"));
    }
    records
        .iter()
        .filter(|r| r.accuracy.accuracy_percent >= accuracy_floor_percent)
        .min_by(|a, b| {
            a.bandwidth
                .bandwidth_mbps
                .total_cmp(&b.bandwidth.bandwidth_mbps)
                .then(a.avg_psnr.cmp(&b.avg_psnr))
                .then(a.crf.cmp(&b.crf))
        })
        .cloned()
        .ok_or_else(|| {
            let best = records
                .iter()
                .map(|r| r.accuracy.accuracy_percent)
                .fold(f64::NEG_INFINITY, f64::max);
            Error::Infeasible(format!(
                "no level reaches {accuracy_floor_percent}% accuracy; best is {best:.6}%"
            ))
        })
}

pub fn write_sweep_csv(records: &[SweepRecord]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{:.6},{},{},{},{:.6},{:.6}",
            r.crf,
            r.avg_psnr.to_fixed(),
            r.accuracy.accuracy_percent,
            r.accuracy.correct_frames,
            r.accuracy.total_frames,
            r.bandwidth.size_bits,
            r.bandwidth.duration_s,
            r.bandwidth.bandwidth_mbps,
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// Reads a sweep CSV. Values are taken as written, so hand-built tables
/// (for example published bandwidth figures) load unchanged.
pub fn read_sweep_csv(text: &str) -> Result<Vec<SweepRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SWEEP_CSV_HEADER => {}
        _ => {
            return Err(Error::Schema {
                line: 1,
                msg: format!("expected header `{SWEEP_CSV_HEADER}`"),
            })
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |msg: String| Error::Schema { line: line_no, msg };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 8 {
            return Err(schema(format!("expected 8 columns, found {}", cols.len())));
        }
        let int = |idx: usize| -> Result<u64> {
            cols[idx]
                .parse::<u64>()
                .map_err(|_| schema(format!("column {} is not an integer: `{}`", idx + 1, cols[idx])))
        };
        let float = |idx: usize| -> Result<f64> {
            cols[idx]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| schema(format!("column {} is not a number: `{}`", idx + 1, cols[idx])))
        };
        let crf = u8::try_from(int(0)?)
            .map_err(|_| schema("crf out of range".into()))
            .and_then(|c| QualityLevel::new(c).map_err(|e| schema(e.to_string())))?;
        let avg_psnr = PsnrDb::parse(cols[1]).map_err(|e| schema(e.to_string()))?;
        let accuracy_percent = float(2)?;
        let correct = int(3)? as usize;
        let total = int(4)? as usize;
        let mut accuracy = AccuracyResult::new(correct, total).map_err(|e| schema(e.to_string()))?;
        if !(0.0..=100.0).contains(&accuracy_percent) {
            return Err(schema(format!("accuracy {accuracy_percent} outside [0, 100]")));
        }
        accuracy.accuracy_percent = accuracy_percent;
        let size_bits = int(5)?;
        let duration_s = float(6)?;
        let bandwidth_mbps = float(7)?;
        if duration_s <= 0.0 || bandwidth_mbps < 0.0 {
            return Err(schema("duration must be > 0 and bandwidth >= 0".into()));
        }
        records.push(SweepRecord {
            crf,
            avg_psnr,
            accuracy,
            bandwidth: BandwidthSample {
                size_bits,
                duration_s,
                bandwidth_mbps,
            },
        });
    }
    records.sort_by_key(|r| r.crf);
    Ok(records)
}
