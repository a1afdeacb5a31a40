use std::fmt::Write as _;

use serde::Serialize;

use crate::dataset::{Dataset, ImageRecord, Split};
use crate::error::{Error, Result};

use super::{ap_at, confusion_matrix, fp_n, ApMethod, ConfusionMatrix, Detection, EvalConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassResult {
    pub category_id: u32,
    pub name: String,
    pub n_gt: usize,
    pub n_det: usize,
    pub ap50: Option<f64>,
    /// AP at each configured IoU threshold, in config order.
    pub ap: Vec<Option<f64>>,
}

/// Metrics over one set of images (the union or one subset).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetMetrics {
    pub name: String,
    pub n_images: usize,
    pub n_gt: usize,
    pub per_class: Vec<ClassResult>,
    pub ap50: Option<f64>,
    /// Mean over configured IoU thresholds of the class-mean AP.
    pub map: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FalsePositiveRate {
    pub value: f64,
    pub min_confidence: f64,
    pub n_images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub union: SetMetrics,
    pub subsets: Vec<SetMetrics>,
    pub fp_n: Option<FalsePositiveRate>,
    pub confusion: ConfusionMatrix,
}

fn set_metrics(
    name: &str,
    gt: &Dataset,
    images: &[&ImageRecord],
    dets: &[Detection],
    cfg: &EvalConfig,
) -> Result<SetMetrics> {
    let ids: std::collections::HashSet<u64> = images.iter().map(|i| i.id).collect();
    let dets: Vec<Detection> = dets.iter().filter(|d| ids.contains(&d.image_id)).cloned().collect();
    let at50 = ap_at(&gt.categories, images, &dets, 0.5, ApMethod::AllPoint)?;
    let sweeps = cfg
        .iou_thresholds
        .iter()
        .map(|&t| ap_at(&gt.categories, images, &dets, t, cfg.ap_method))
        .collect::<Result<Vec<_>>>()?;
    let per_class = gt
        .categories
        .iter()
        .enumerate()
        .map(|(k, c)| ClassResult {
            category_id: c.id,
            name: c.name.clone(),
            n_gt: at50.per_class[k].n_gt,
            n_det: at50.per_class[k].n_det,
            ap50: at50.per_class[k].ap,
            ap: sweeps.iter().map(|s| s.per_class[k].ap).collect(),
        })
        .collect();
    let means: Option<Vec<f64>> = sweeps.iter().map(|s| s.mean).collect();
    Ok(SetMetrics {
        name: name.to_string(),
        n_images: images.len(),
        n_gt: images.iter().map(|i| i.objects.len()).sum(),
        per_class,
        ap50: at50.mean,
        map: means.map(|m| m.iter().sum::<f64>() / m.len() as f64),
    })
}

/// Evaluates every non-negative image as one set; images tagged `negative`
/// feed FP_N only.
pub fn evaluate(gt: &Dataset, dets: &[Detection], cfg: &EvalConfig) -> Result<EvalReport> {
    subset_report(gt, dets, cfg, &[])
}

/// Like [`evaluate`], adding a section per requested split tag. Each subset
/// is scored from its own pooled detections; the union is never an average
/// of subset numbers.
pub fn subset_report(
    gt: &Dataset,
    dets: &[Detection],
    cfg: &EvalConfig,
    tags: &[String],
) -> Result<EvalReport> {
    cfg.validate()?;
    gt.validate()?;
    let positives: Vec<&ImageRecord> = gt.images.iter().filter(|i| i.split != Split::Negative).collect();
    let negatives: Vec<u64> = gt
        .images
        .iter()
        .filter(|i| i.split == Split::Negative)
        .map(|i| i.id)
        .collect();
    let all: Vec<&ImageRecord> = gt.images.iter().collect();
    // surfaces unknown categories / images once, before any per-set work
    super::group_by_image(&all, dets, &gt.categories)?;

    let union = set_metrics("all", gt, &positives, dets, cfg)?;
    let subsets = tags
        .iter()
        .map(|tag| {
            let imgs: Vec<&ImageRecord> = positives
                .iter()
                .copied()
                .filter(|i| i.split.to_string() == *tag)
                .collect();
            if imgs.is_empty() {
                return Err(Error::UnknownTag(tag.clone()));
            }
            set_metrics(tag, gt, &imgs, dets, cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let fp = if negatives.is_empty() {
        None
    } else {
        Some(FalsePositiveRate {
            value: fp_n(dets, &negatives, cfg.fp_min_confidence)?,
            min_confidence: cfg.fp_min_confidence,
            n_images: negatives.len(),
        })
    };

    let positive_ids: std::collections::HashSet<u64> = positives.iter().map(|i| i.id).collect();
    let positive_dets: Vec<Detection> = dets
        .iter()
        .filter(|d| positive_ids.contains(&d.image_id))
        .cloned()
        .collect();
    let confusion = confusion_matrix(
        &gt.categories,
        &positives,
        &positive_dets,
        cfg.confusion_min_confidence,
        cfg.confusion_iou,
    )?;

    Ok(EvalReport {
        config: cfg.clone(),
        config_hash: None,
        union,
        subsets,
        fp_n: fp,
        confusion,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{:.1}%", v * 100.0)).unwrap_or_else(|| "n/a".into())
}

impl EvalReport {
    /// Plain-text summary: one row per image set, then per-class AP50.
    pub fn to_text_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<16} {:>7} {:>7} {:>8} {:>8}", "set", "images", "objects", "AP50", "mAP");
        let _ = writeln!(s, "{}", "-".repeat(50));
        for m in std::iter::once(&self.union).chain(&self.subsets) {
            let _ = writeln!(
                s,
                "{:<16} {:>7} {:>7} {:>8} {:>8}",
                m.name,
                m.n_images,
                m.n_gt,
                pct(m.ap50),
                pct(m.map)
            );
        }
        if let Some(fp) = &self.fp_n {
            let _ = writeln!(
                s,
                "\nFP_N = {:.2} (min confidence {:.2}, {} negative images)",
                fp.value, fp.min_confidence, fp.n_images
            );
        }
        let _ = writeln!(s, "\n{:<24} {:>6} {:>6} {:>8}", "class", "gt", "dets", "AP50");
        let _ = writeln!(s, "{}", "-".repeat(47));
        for c in &self.union.per_class {
            let _ = writeln!(s, "{:<24} {:>6} {:>6} {:>8}", c.name, c.n_gt, c.n_det, pct(c.ap50));
        }
        s
    }
}
