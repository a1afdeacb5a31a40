//! Precision/recall curves and average precision.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// One point of a PR curve, taken at a detection-score threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// How the area under a PR curve is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMethod {
    /// Exact area under the monotone precision envelope.
    #[default]
    AllPoint,
    /// Mean envelope precision at recall 0, 0.01, ..., 1.
    Interp101,
    /// Trapezoidal rule on the raw curve, starting at recall 0.
    Trapezoid,
}

/// PR curve from `(score, is_true_positive)` pairs of one class.
///
/// One point per unique score, in descending score order; each point counts
/// every detection scoring at least that threshold. Returns `None` when
/// `n_gt == 0`, where recall is undefined.
pub fn pr_curve(scored: &[(f64, bool)], n_gt: usize) -> Option<Vec<PrPoint>> {
    if n_gt == 0 {
        return None;
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.push(PrPoint {
            threshold,
            recall: tp as f64 / n_gt as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    Some(curve)
}

/// Precision envelope: each point's precision replaced by the maximum
/// precision at any point with equal or higher recall.
pub fn precision_envelope(curve: &[PrPoint]) -> Vec<PrPoint> {
    let mut out = curve.to_vec();
    let mut running = 0.0f64;
    for p in out.iter_mut().rev() {
        running = running.max(p.precision);
        p.precision = running;
    }
    out
}

pub fn average_precision(curve: &[PrPoint], method: ApMethod) -> f64 {
    if curve.is_empty() {
        return 0.0;
    }
    // Recall is non-decreasing along a curve built by `pr_curve`.
    let ap = match method {
        ApMethod::AllPoint => {
            let env = precision_envelope(curve);
            let mut prev_recall = 0.0;
            let mut area = 0.0;
            for p in &env {
                area += (p.recall - prev_recall) * p.precision;
                prev_recall = p.recall;
            }
            area
        }
        ApMethod::Interp101 => {
            let env = precision_envelope(curve);
            let mut sum = 0.0;
            let mut k = 0;
            for i in 0..=100 {
                let r = i as f64 / 100.0;
                while k < env.len() && env[k].recall < r {
                    k += 1;
                }
                if k < env.len() {
                    sum += env[k].precision;
                }
            }
            sum / 101.0
        }
        ApMethod::Trapezoid => {
            let (mut prev_r, mut prev_p) = (0.0, curve[0].precision);
            let mut area = 0.0;
            for p in curve {
                area += (p.recall - prev_r) * (p.precision + prev_p) / 2.0;
                prev_r = p.recall;
                prev_p = p.precision;
            }
            area
        }
    };
    ap.clamp(0.0, 1.0)
}
