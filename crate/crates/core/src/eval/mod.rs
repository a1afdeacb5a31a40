//! Detection evaluation: greedy matching, PR curves and AP, false positives
//! on negative images, confusion matrices, and per-subset reports.

mod ap;
mod confusion;
mod matching;
mod report;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

pub use ap::{average_precision, pr_curve, precision_envelope, ApMethod, PrPoint};
pub use confusion::{confusion_matrix, ConfusionMatrix};
pub use matching::{match_detections, score_order, Assignment, MatchResult};
pub use report::{evaluate, subset_report, ClassResult, EvalReport, SetMetrics};

use crate::dataset::{Category, ImageRecord};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// A scored prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: BoundingBox,
    pub score: f64,
}

impl Detection {
    pub fn new(image_id: u64, category_id: u32, bbox: BoundingBox, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Dataset(format!("score {score} outside [0, 1]")));
        }
        Ok(Self {
            image_id,
            category_id,
            bbox,
            score,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    pub ap_method: ApMethod,
    pub fp_min_confidence: f64,
    pub confusion_min_confidence: f64,
    pub confusion_iou: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: vec![0.5],
            ap_method: ApMethod::AllPoint,
            fp_min_confidence: 0.10,
            confusion_min_confidence: 0.25,
            confusion_iou: 0.45,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let ratio = |v: f64| (0.0..=1.0).contains(&v);
        if self.iou_thresholds.is_empty() || !self.iou_thresholds.iter().all(|&t| ratio(t) && t > 0.0) {
            return Err(Error::Config("iou_thresholds must be non-empty values in (0, 1]".into()));
        }
        if !ratio(self.fp_min_confidence)
            || !ratio(self.confusion_min_confidence)
            || !(ratio(self.confusion_iou) && self.confusion_iou > 0.0)
        {
            return Err(Error::Config("confidence and IoU thresholds must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// AP of one class; `ap` is `None` when the class has no ground truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp {
    pub category_id: u32,
    pub n_gt: usize,
    pub n_det: usize,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApSummary {
    pub iou_threshold: f64,
    pub per_class: Vec<ClassAp>,
    /// Mean over classes with at least one ground truth.
    pub mean: Option<f64>,
}

pub(crate) fn group_by_image<'a>(
    images: &[&ImageRecord],
    dets: &'a [Detection],
    categories: &[Category],
) -> Result<HashMap<u64, Vec<&'a Detection>>> {
    let known_images: HashSet<u64> = images.iter().map(|i| i.id).collect();
    let known_cats: HashSet<u32> = categories.iter().map(|c| c.id).collect();
    let mut out: HashMap<u64, Vec<&Detection>> = HashMap::new();
    for (k, d) in dets.iter().enumerate() {
        if !known_cats.contains(&d.category_id) {
            return Err(Error::UnknownCategory {
                category_id: d.category_id,
                context: format!("detection {k}"),
            });
        }
        if !known_images.contains(&d.image_id) {
            return Err(Error::Dataset(format!(
                "detection {k} references image id {} outside the evaluated set",
                d.image_id
            )));
        }
        out.entry(d.image_id).or_default().push(d);
    }
    Ok(out)
}

/// `(score, is_tp)` for every detection of `category`, plus its ground-truth count.
pub fn class_matches(
    images: &[&ImageRecord],
    by_image: &HashMap<u64, Vec<&Detection>>,
    category: u32,
    iou_threshold: f64,
) -> (Vec<(f64, bool)>, usize) {
    let mut scored = Vec::new();
    let mut n_gt = 0;
    for img in images {
        let gts: Vec<BoundingBox> = img
            .objects
            .iter()
            .filter(|o| o.category == category)
            .map(|o| o.bbox)
            .collect();
        n_gt += gts.len();
        let dets: Vec<&Detection> = by_image
            .get(&img.id)
            .map(|v| v.iter().copied().filter(|d| d.category_id == category).collect())
            .unwrap_or_default();
        let m = match_detections(&dets, &gts, iou_threshold);
        scored.extend(dets.iter().zip(&m.assignments).map(|(d, a)| (d.score, a.is_tp())));
    }
    (scored, n_gt)
}

/// Per-class AP at one IoU threshold over the given images.
pub fn ap_at(
    categories: &[Category],
    images: &[&ImageRecord],
    dets: &[Detection],
    iou_threshold: f64,
    method: ApMethod,
) -> Result<ApSummary> {
    let by_image = group_by_image(images, dets, categories)?;
    let per_class: Vec<ClassAp> = categories
        .iter()
        .map(|c| {
            let (scored, n_gt) = class_matches(images, &by_image, c.id, iou_threshold);
            let ap = pr_curve(&scored, n_gt).map(|curve| average_precision(&curve, method));
            ClassAp {
                category_id: c.id,
                n_gt,
                n_det: scored.len(),
                ap,
            }
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().filter_map(|c| c.ap).collect();
    let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(ApSummary {
        iou_threshold,
        per_class,
        mean,
    })
}

/// AP at IoU 0.50 with all-point interpolation.
pub fn ap50(categories: &[Category], images: &[&ImageRecord], dets: &[Detection]) -> Result<ApSummary> {
    ap_at(categories, images, dets, 0.5, ApMethod::AllPoint)
}

/// Mean number of detections scoring at least `min_confidence` per negative image.
pub fn fp_n(dets: &[Detection], negative_image_ids: &[u64], min_confidence: f64) -> Result<f64> {
    if negative_image_ids.is_empty() {
        return Err(Error::Dataset("negative image set is empty".into()));
    }
    let ids: HashSet<u64> = negative_image_ids.iter().copied().collect();
    let count = dets
        .iter()
        .filter(|d| d.score >= min_confidence && ids.contains(&d.image_id))
        .count();
    Ok(count as f64 / ids.len() as f64)
}
