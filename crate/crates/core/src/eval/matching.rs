use std::cmp::Ordering;

use crate::geometry::{iou, BoundingBox};

use super::Detection;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    /// Matched the ground truth at this index.
    TruePositive { gt: usize },
    FalsePositive,
}

impl Assignment {
    pub fn is_tp(&self) -> bool {
        matches!(self, Assignment::TruePositive { .. })
    }
}

/// Outcome of matching one image/class worth of detections.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub iou_threshold: f64,
    /// One entry per input detection, in input order.
    pub assignments: Vec<Assignment>,
    /// One flag per ground truth; `true` once detected.
    pub gt_detected: Vec<bool>,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.assignments.iter().filter(|a| a.is_tp()).count()
    }

    pub fn missed(&self) -> usize {
        self.gt_detected.iter().filter(|d| !**d).count()
    }
}

/// Indices of `dets` ordered by descending score; equal scores keep input order.
pub fn score_order<D: std::borrow::Borrow<Detection>>(dets: &[D]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .borrow()
            .score
            .partial_cmp(&dets[a].borrow().score)
            .unwrap_or(Ordering::Equal)
    });
    order
}

/// Greedy one-to-one matching for a single image and class.
///
/// Detections are visited by descending score. Each takes the still
/// unmatched ground truth with the highest IoU, provided that IoU reaches
/// `iou_threshold`; otherwise it is a false positive. IoU ties go to the
/// lower ground-truth index.
pub fn match_detections<D: std::borrow::Borrow<Detection>>(
    dets: &[D],
    gts: &[BoundingBox],
    iou_threshold: f64,
) -> MatchResult {
    let mut assignments = vec![Assignment::FalsePositive; dets.len()];
    let mut gt_detected = vec![false; gts.len()];
    for i in score_order(dets) {
        let det = dets[i].borrow();
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_detected[g] {
                continue;
            }
            let v = iou(&det.bbox, gt);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            gt_detected[g] = true;
            assignments[i] = Assignment::TruePositive { gt: g };
        }
    }
    MatchResult {
        iou_threshold,
        assignments,
        gt_detected,
    }
}
