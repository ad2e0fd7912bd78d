//! Axis-aligned box geometry: intersection-over-union and greedy
//! non-max suppression.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_LABEL: &str = "pedestrian";

/// IoU above which NMS discards the lower-confidence box.
pub const NMS_IOU_THRESHOLD: f64 = 0.6;

fn default_label() -> String {
    DEFAULT_LABEL.to_string()
}

fn is_default_label(label: &str) -> bool {
    label == DEFAULT_LABEL
}

/// Pedestrian box in continuous pixel coordinates, `(x, y)` at the top-left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conf: Option<f64>,
    #[serde(
        default = "default_label",
        rename = "label",
        skip_serializing_if = "is_default_label"
    )]
    pub class_label: String,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = BoundingBox {
            x,
            y,
            w,
            h,
            conf: None,
            class_label: default_label(),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn with_conf(mut self, conf: f64) -> Result<Self> {
        self.conf = Some(conf);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Invalid("box coordinates must be finite".into()));
        }
        if !(self.w > 0.0 && self.h > 0.0) {
            return Err(Error::Invalid(format!(
                "box extent must be positive, got w={} h={}",
                self.w, self.h
            )));
        }
        if let Some(c) = self.conf {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Invalid(format!("confidence {c} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.right() <= width && self.bottom() <= height
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }
}

/// Intersection over union, always in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let overlap = a.intersection_area(b);
    if overlap == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - overlap;
    (overlap / union).clamp(0.0, 1.0)
}

/// Greedy NMS: keep the most confident remaining box, drop everything whose
/// IoU with it is strictly greater than `iou_threshold`, repeat.
///
/// Output is in descending confidence order; equal confidences keep input
/// order. Every box must carry a confidence.
pub fn non_max_suppress(boxes: &[BoundingBox], iou_threshold: f64) -> Result<Vec<BoundingBox>> {
    let mut order = Vec::with_capacity(boxes.len());
    for (i, b) in boxes.iter().enumerate() {
        let conf = b
            .conf
            .ok_or_else(|| Error::Contract(format!("box {i} has no confidence")))?;
        order.push((i, conf));
    }
    // stable sort keeps earlier index first on ties
    order.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut suppressed = vec![false; order.len()];
    let mut kept = Vec::new();
    for i in 0..order.len() {
        if suppressed[i] {
            continue;
        }
        let keep = &boxes[order[i].0];
        kept.push(keep.clone());
        for j in (i + 1)..order.len() {
            if !suppressed[j] && iou(keep, &boxes[order[j].0]) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    Ok(kept)
}
