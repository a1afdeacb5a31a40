use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::dataset::{Category, ImageRecord};
use crate::error::{Error, Result};
use crate::geometry::iou;

use super::Detection;

/// Counts over `(true class, predicted class)` with a trailing background
/// row and column. Rows are ground truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    pub min_confidence: f64,
    pub iou_threshold: f64,
    /// Category ids in row/column order; background is the extra last index.
    pub category_ids: Vec<u32>,
    pub labels: Vec<String>,
    pub cells: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn background(&self) -> usize {
        self.category_ids.len()
    }

    pub fn index_of(&self, category_id: u32) -> Option<usize> {
        self.category_ids.iter().position(|&c| c == category_id)
    }

    /// Cell by category ids; `None` stands for background.
    pub fn get(&self, truth: Option<u32>, predicted: Option<u32>) -> u64 {
        let idx = |c: Option<u32>| match c {
            Some(id) => self.index_of(id).expect("known category"),
            None => self.background(),
        };
        self.cells[idx(truth)][idx(predicted)]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for l in &self.labels {
            let _ = write!(s, ",{}", csv_field(l));
        }
        s.push('\n');
        for (row, l) in self.cells.iter().zip(&self.labels) {
            s.push_str(&csv_field(l));
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Class-agnostic confusion matrix.
///
/// Detections below `min_confidence` are dropped. Within each image, all
/// (ground truth, detection) pairs with IoU >= `iou_threshold` are visited in
/// descending IoU order (ties by ground-truth index, then higher score, then
/// input order) and
/// matched greedily one-to-one. Matched pairs count at (gt class, predicted
/// class); leftover ground truths at (gt class, background); leftover
/// detections at (background, predicted class).
pub fn confusion_matrix(
    categories: &[Category],
    images: &[&ImageRecord],
    dets: &[Detection],
    min_confidence: f64,
    iou_threshold: f64,
) -> Result<ConfusionMatrix> {
    let category_ids: Vec<u32> = categories.iter().map(|c| c.id).collect();
    let mut labels: Vec<String> = categories.iter().map(|c| c.name.clone()).collect();
    labels.push("background".into());
    let n = category_ids.len() + 1;
    let bg = n - 1;
    let index: HashMap<u32, usize> = category_ids.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let class = |id: u32| {
        index.get(&id).copied().ok_or_else(|| Error::UnknownCategory {
            category_id: id,
            context: "confusion matrix input".into(),
        })
    };

    let mut by_image: HashMap<u64, Vec<&Detection>> = HashMap::new();
    for d in dets.iter().filter(|d| d.score >= min_confidence) {
        by_image.entry(d.image_id).or_default().push(d);
    }

    let mut cells = vec![vec![0u64; n]; n];
    for img in images {
        let mut preds = by_image.remove(&img.id).unwrap_or_default();
        preds.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal));
        let mut pairs = Vec::new();
        for (g, gt) in img.objects.iter().enumerate() {
            for (p, det) in preds.iter().enumerate() {
                let v = iou(&gt.bbox, &det.bbox);
                if v >= iou_threshold {
                    pairs.push((v, g, p));
                }
            }
        }
        pairs.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut gt_used = vec![false; img.objects.len()];
        let mut pred_used = vec![false; preds.len()];
        for (_, g, p) in pairs {
            if gt_used[g] || pred_used[p] {
                continue;
            }
            gt_used[g] = true;
            pred_used[p] = true;
            cells[class(img.objects[g].category)?][class(preds[p].category_id)?] += 1;
        }
        for (g, used) in gt_used.iter().enumerate() {
            if !used {
                cells[class(img.objects[g].category)?][bg] += 1;
            }
        }
        for (p, used) in pred_used.iter().enumerate() {
            if !used {
                cells[bg][class(preds[p].category_id)?] += 1;
            }
        }
    }
    if let Some((id, _)) = by_image.into_iter().next() {
        return Err(Error::Dataset(format!(
            "detection references image id {id} outside the evaluated set"
        )));
    }

    Ok(ConfusionMatrix {
        min_confidence,
        iou_threshold,
        category_ids,
        labels,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AnnotatedObject, Source, Split};
    use crate::geometry::BoundingBox;
    use crate::raster::ColorMode;

    fn cats() -> Vec<Category> {
        vec![
            Category { id: 1, name: "A".into() },
            Category { id: 2, name: "B".into() },
        ]
    }

    fn b(x: f64) -> BoundingBox {
        BoundingBox::new(x, 0.0, 10.0, 10.0).unwrap()
    }

    fn image(objects: Vec<(u32, BoundingBox)>) -> ImageRecord {
        ImageRecord {
            id: 1,
            file_name: "x".into(),
            width: 100,
            height: 100,
            color_mode: ColorMode::Rgb,
            split: Split::Test,
            objects: objects
                .into_iter()
                .map(|(c, bb)| AnnotatedObject::new(c, bb, 1.0, Source::Manual).unwrap())
                .collect(),
        }
    }

    fn det(c: u32, bb: BoundingBox, s: f64) -> Detection {
        Detection::new(1, c, bb, s).unwrap()
    }

    #[test]
    fn matched_same_class() {
        // shift 10/3 gives IoU exactly 0.5
        let img = image(vec![(1, b(0.0))]);
        let cm = confusion_matrix(&cats(), &[&img], &[det(1, b(10.0 / 3.0), 0.9)], 0.25, 0.45).unwrap();
        assert_eq!(cm.get(Some(1), Some(1)), 1);
        assert_eq!(cm.cells.iter().flatten().sum::<u64>(), 1);
    }

    #[test]
    fn misclassification_and_background() {
        let img = image(vec![(1, b(0.0))]);
        let cm = confusion_matrix(
            &cats(),
            &[&img],
            &[det(2, b(1.0), 0.9), det(2, b(50.0), 0.8), det(1, b(80.0), 0.1)],
            0.25,
            0.45,
        )
        .unwrap();
        assert_eq!(cm.get(Some(1), Some(2)), 1);
        assert_eq!(cm.get(None, Some(2)), 1);
        // below min confidence: ignored entirely
        assert_eq!(cm.get(None, Some(1)), 0);
        assert_eq!(cm.get(Some(1), None), 0);
    }

    #[test]
    fn missed_gt_goes_to_background_column() {
        let img = image(vec![(2, b(0.0))]);
        let cm = confusion_matrix(&cats(), &[&img], &[], 0.25, 0.45).unwrap();
        assert_eq!(cm.get(Some(2), None), 1);
        assert!(cm.to_csv().starts_with("true\\predicted,A,B,background\n"));
    }
}
