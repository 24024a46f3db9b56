//! Face detection scoring: IoU, greedy matching and all-points interpolated AP.

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, DetectionSet};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidArgument(format!(
                "detection score {score} outside [0, 1]"
            )));
        }
        Ok(Self { bbox, score })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedDetection {
    pub score: f64,
    pub is_tp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Indices of `scores` in descending order; equal scores keep input order.
fn descending_order(scores: impl Iterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    order
}

/// Greedy one-to-one matching in descending confidence. Each detection takes
/// the unmatched ground truth with the highest IoU at or above `iou_thresh`
/// (lowest index on IoU ties). Output is in processing order.
pub fn match_detections(
    dets: &[Detection],
    gts: &[BoundingBox],
    iou_thresh: f64,
) -> Result<Vec<MatchedDetection>> {
    if !(iou_thresh > 0.0 && iou_thresh <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "IoU threshold {iou_thresh} outside (0, 1]"
        )));
    }
    let mut taken = vec![false; gts.len()];
    let order = descending_order(dets.iter().map(|d| d.score));
    Ok(order
        .into_iter()
        .map(|i| {
            let det = &dets[i];
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                let v = iou(&det.bbox, gt);
                if v >= iou_thresh && best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            MatchedDetection {
                score: det.score,
                is_tp: best.is_some(),
            }
        })
        .collect())
}

/// Precision/recall after each detection, sweeping descending score.
pub fn pr_curve(matches: &[MatchedDetection], num_gt: usize) -> Result<Vec<PrPoint>> {
    if num_gt == 0 {
        return Err(Error::InvalidArgument(
            "average precision needs at least one ground truth".into(),
        ));
    }
    let mut tp = 0usize;
    Ok(descending_order(matches.iter().map(|m| m.score))
        .into_iter()
        .enumerate()
        .map(|(k, i)| {
            if matches[i].is_tp {
                tp += 1;
            }
            PrPoint {
                recall: tp as f64 / num_gt as f64,
                precision: tp as f64 / (k + 1) as f64,
            }
        })
        .collect())
}

/// All-points interpolated AP in `[0, 1]`: the sum over recall increments of
/// the increment times the best precision achieved at that recall or beyond.
pub fn average_precision(matches: &[MatchedDetection], num_gt: usize) -> Result<f64> {
    let curve = pr_curve(matches, num_gt)?;
    let mut interp = vec![0.0; curve.len()];
    let mut running = 0.0f64;
    for (k, p) in curve.iter().enumerate().rev() {
        running = running.max(p.precision);
        interp[k] = running;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, best) in curve.iter().zip(&interp) {
        if p.recall > prev_recall {
            ap += (p.recall - prev_recall) * best;
            prev_recall = p.recall;
        }
    }
    Ok(ap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub dataset: String,
    pub iou_threshold: f64,
    /// In `[0, 1]`.
    pub ap: f64,
    pub num_gt: usize,
    pub num_detections: usize,
    pub true_positives: usize,
}

/// Scores detections against one face per manifest image, using the
/// annotated box or the minimal landmark box. Detections for images outside
/// the manifest are ignored.
pub fn evaluate_detections(
    manifest: &DatasetManifest,
    dets: &DetectionSet,
    iou_thresh: f64,
) -> Result<DetectionReport> {
    if manifest.is_empty() {
        return Err(Error::EmptyInput("manifest has no records"));
    }
    let mut records: Vec<_> = manifest.records().iter().collect();
    records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let mut matches = Vec::new();
    for r in records {
        if let Some(list) = dets.get(&r.image_id) {
            matches.extend(match_detections(list, &[r.gt_box()], iou_thresh)?);
        }
    }
    Ok(DetectionReport {
        dataset: manifest.name.clone(),
        iou_threshold: iou_thresh,
        ap: average_precision(&matches, manifest.len())?,
        num_gt: manifest.len(),
        num_detections: matches.len(),
        true_positives: matches.iter().filter(|m| m.is_tp).count(),
    })
}
