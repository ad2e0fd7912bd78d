//! Reference implementations written from the textbook definitions, sharing
//! no code with the library beyond its plain data types.
#![allow(dead_code)]

use pedlink::boxes::BoundingBox;
use pedlink::frameio::Frame;
use rand::Rng;

/// IoU from corner coordinates.
pub fn iou_oracle(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = (a.x, a.y, a.x + a.w, a.y + a.h);
    let (bx1, by1, bx2, by2) = (b.x, b.y, b.x + b.w, b.y + b.h);
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    let union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Greedy NMS as usually stated: repeatedly take the most confident
/// remaining box and discard every remaining box overlapping it by more
/// than the threshold.
pub fn nms_oracle(boxes: &[BoundingBox], threshold: f64) -> Vec<BoundingBox> {
    let mut remaining: Vec<BoundingBox> = boxes.to_vec();
    // stable: equal confidences keep their input order
    remaining.sort_by(|a, b| b.conf.unwrap().partial_cmp(&a.conf.unwrap()).unwrap());
    let mut keep = Vec::new();
    while !remaining.is_empty() {
        let best = remaining.remove(0);
        remaining.retain(|r| iou_oracle(&best, r) <= threshold);
        keep.push(best);
    }
    keep
}

/// `10 log10(255^2 / MSE)` by direct summation; `None` for identical frames.
pub fn psnr_oracle(a: &Frame, b: &Frame) -> Option<f64> {
    let (w, h) = (a.width(), a.height());
    let mut sum = 0u64;
    for y in 0..h {
        for x in 0..w {
            let d = a.get(x, y) as i64 - b.get(x, y) as i64;
            sum += (d * d) as u64;
        }
    }
    if sum == 0 {
        return None;
    }
    let mse = sum as f64 / (w as f64 * h as f64);
    Some(10.0 * (65025.0 / mse).log10())
}

/// Largest number of GT boxes that can be paired one-to-one with detections
/// at IoU >= `thr`, by exhaustive search.
pub fn max_matching(gt: &[BoundingBox], det: &[BoundingBox], thr: f64) -> usize {
    fn go(i: usize, gt: &[BoundingBox], det: &[BoundingBox], used: &mut Vec<bool>, thr: f64) -> usize {
        if i == gt.len() {
            return 0;
        }
        let mut best = go(i + 1, gt, det, used, thr);
        for j in 0..det.len() {
            if !used[j] && iou_oracle(&gt[i], &det[j]) >= thr {
                used[j] = true;
                best = best.max(1 + go(i + 1, gt, det, used, thr));
                used[j] = false;
            }
        }
        best
    }
    go(0, gt, det, &mut vec![false; det.len()], thr)
}

/// Frame correctness under the optimal assignment.
pub fn optimal_verdict(gt: &[BoundingBox], det: &[BoundingBox], thr: f64, allow_fp: bool) -> bool {
    let m = max_matching(gt, det, thr);
    m == gt.len() && (allow_fp || det.len() == m)
}

pub fn random_box<R: Rng>(rng: &mut R, extent: f64) -> BoundingBox {
    let w = rng.random_range(0.5..extent / 2.0);
    let h = rng.random_range(0.5..extent / 2.0);
    BoundingBox::new(rng.random_range(0.0..extent), rng.random_range(0.0..extent), w, h).unwrap()
}

pub fn random_scored_box<R: Rng>(rng: &mut R, extent: f64) -> BoundingBox {
    // coarse confidences so ties occur
    let conf = rng.random_range(1..=10) as f64 / 10.0;
    random_box(rng, extent).with_conf(conf).unwrap()
}

pub fn random_frame<R: Rng>(rng: &mut R, width: u32, height: u32) -> Frame {
    let px = (0..width * height).map(|_| rng.random::<u8>()).collect();
    Frame::new(width, height, px).unwrap()
}

pub fn max_abs_diff(a: &Frame, b: &Frame) -> u8 {
    a.pixels().iter().zip(b.pixels()).map(|(x, y)| x.abs_diff(*y)).max().unwrap_or(0)
}

pub fn median_u64(mut v: Vec<u64>) -> u64 {
    v.sort_unstable();
    v[v.len() / 2]
}

pub fn median_f64(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}
