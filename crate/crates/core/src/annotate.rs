//! Mask-derived annotation for single-object images, and validators for
//! manually annotated datasets.
//!
//! Masks come from files or from [`segment_controlled`], which differences an
//! image against an empty reference shot of the same scene. Everything
//! downstream of the mask source (cleanup, background rejection, largest-mask
//! selection) is independent of where masks came from.

use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedObject, Dataset, Source};
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::mask::{label_components, split_components, BinaryMask};
use crate::raster::Raster;

/// Fraction of the image area used for speck/hole limits when unset.
pub const DEFAULT_AREA_FRACTION: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotRules {
    /// A mask whose box has at least this IoU with the frame is background.
    pub background_iou_min: f64,
    /// Manual annotations need at least this visible share.
    pub visible_min: f64,
    /// Split fragments each need at least this visible share to be merged.
    pub split_side_min: f64,
    /// Same-class boxes overlapping more than this are merge candidates.
    pub merge_iou_min: f64,
    /// Foreground components smaller than this are removed.
    /// `None` means 0.1% of the image area.
    pub speck_area_max: Option<usize>,
    /// Enclosed background components smaller than this are filled.
    /// `None` means 0.1% of the image area.
    pub hole_area_max: Option<usize>,
}

impl Default for AnnotRules {
    fn default() -> Self {
        Self {
            background_iou_min: 0.90,
            visible_min: 0.20,
            split_side_min: 0.10,
            merge_iou_min: 0.90,
            speck_area_max: None,
            hole_area_max: None,
        }
    }
}

impl AnnotRules {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("background_iou_min", self.background_iou_min),
            ("visible_min", self.visible_min),
            ("split_side_min", self.split_side_min),
            ("merge_iou_min", self.merge_iou_min),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} = {v} must lie in (0, 1]")));
            }
        }
        Ok(())
    }

    fn area_limit(limit: Option<usize>, width: u32, height: u32) -> usize {
        limit.unwrap_or_else(|| {
            (width as f64 * height as f64 * DEFAULT_AREA_FRACTION).round() as usize
        })
    }

    pub fn speck_limit(&self, width: u32, height: u32) -> usize {
        Self::area_limit(self.speck_area_max, width, height)
    }

    pub fn hole_limit(&self, width: u32, height: u32) -> usize {
        Self::area_limit(self.hole_area_max, width, height)
    }
}

/// Candidate segmentations for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub width: u32,
    pub height: u32,
    pub masks: Vec<BinaryMask>,
}

impl MaskSet {
    pub fn new(width: u32, height: u32, masks: Vec<BinaryMask>) -> Result<Self> {
        for m in &masks {
            if m.dimensions() != (width, height) {
                return Err(Error::DimensionMismatch {
                    expected: (width, height),
                    actual: m.dimensions(),
                });
            }
        }
        Ok(Self {
            width,
            height,
            masks,
        })
    }
}

/// True iff the mask's tight box covers the frame with IoU >= `background_iou_min`.
pub fn is_background(mask: &BinaryMask, rules: &AnnotRules) -> Result<bool> {
    let bbox = mask.tight_bbox()?;
    let frame = BoundingBox::frame(mask.width(), mask.height())?;
    Ok(iou(&bbox, &frame) >= rules.background_iou_min)
}

/// Removes small specks, then fills small enclosed holes (4-connectivity).
///
/// Components strictly smaller than the limit are affected; a hole is a
/// background component that does not touch the border.
pub fn clean_mask(mask: &BinaryMask, rules: &AnnotRules) -> BinaryMask {
    let (w, h) = mask.dimensions();
    let speck = rules.speck_limit(w, h);
    let hole = rules.hole_limit(w, h);
    let mut bits = mask.bits().to_vec();

    let fg = label_components(mask, true);
    for (b, &l) in bits.iter_mut().zip(&fg.labels) {
        if l > 0 && fg.areas[l as usize - 1] < speck {
            *b = false;
        }
    }
    let despeckled = BinaryMask::from_bits(w, h, bits).expect("same dimensions");

    let bg = label_components(&despeckled, false);
    let mut bits = despeckled.bits().to_vec();
    for (b, &l) in bits.iter_mut().zip(&bg.labels) {
        if l > 0 {
            let k = l as usize - 1;
            if !bg.touches_border[k] && bg.areas[k] < hole {
                *b = true;
            }
        }
    }
    BinaryMask::from_bits(w, h, bits).expect("same dimensions")
}

/// The largest non-background mask after cleaning.
///
/// Ties on pixel count are broken by mask content so the result does not
/// depend on candidate order.
pub fn select_object_mask(set: &MaskSet, rules: &AnnotRules) -> Result<BinaryMask> {
    let cleaned: Vec<BinaryMask> = set
        .masks
        .iter()
        .map(|m| clean_mask(m, rules))
        .filter(|m| !m.is_empty())
        .collect();
    if cleaned.is_empty() {
        return Err(Error::EmptyAfterCleaning);
    }
    let mut best: Option<(usize, BinaryMask)> = None;
    for m in cleaned {
        if is_background(&m, rules)? {
            continue;
        }
        let n = m.pixel_count();
        let better = match &best {
            None => true,
            Some((bn, bm)) => n > *bn || (n == *bn && m > *bm),
        };
        if better {
            best = Some((n, m));
        }
    }
    best.map(|(_, m)| m).ok_or(Error::AllBackground)
}

/// Annotation for a single-object image: the tight box of
/// [`select_object_mask`], fully visible, with the known category.
pub fn annotate_single(set: &MaskSet, category: u32, rules: &AnnotRules) -> Result<AnnotatedObject> {
    let mask = select_object_mask(set, rules)?;
    AnnotatedObject::new(category, mask.tight_bbox()?, 1.0, Source::MaskDerived)
}

/// Foreground by per-pixel absolute difference against an empty-scene
/// reference, cleaned, then split into one candidate per component.
///
/// A pixel is foreground when any channel differs by more than `threshold`.
pub fn segment_controlled(
    img: &Raster,
    reference: &Raster,
    threshold: u8,
    rules: &AnnotRules,
) -> Result<MaskSet> {
    if img.dimensions() != reference.dimensions() {
        return Err(Error::DimensionMismatch {
            expected: reference.dimensions(),
            actual: img.dimensions(),
        });
    }
    let (img, reference) = if img.mode() == reference.mode() {
        (img.clone(), reference.clone())
    } else {
        (img.to_grayscale(), reference.to_grayscale())
    };
    let c = img.channels();
    let bits: Vec<bool> = img
        .data()
        .chunks_exact(c)
        .zip(reference.data().chunks_exact(c))
        .map(|(a, b)| a.iter().zip(b).any(|(&x, &y)| x.abs_diff(y) > threshold))
        .collect();
    let (w, h) = img.dimensions();
    let fg = clean_mask(&BinaryMask::from_bits(w, h, bits)?, rules);
    MaskSet::new(w, h, split_components(&fg))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    /// Annotated object is less visible than the annotation rule allows.
    LowVisibility { annotation: usize, visible_fraction: f64 },
    /// Two same-class boxes overlap so much they are probably fragments of
    /// one split object that should carry a single extrapolated box.
    MergeCandidate { first: usize, second: usize, iou: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub image_id: u64,
    pub file_name: String,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            ViolationKind::LowVisibility {
                annotation,
                visible_fraction,
            } => write!(
                f,
                "image {} ({}): annotation {annotation} visible fraction {visible_fraction:.3} below minimum",
                self.image_id, self.file_name
            ),
            ViolationKind::MergeCandidate { first, second, iou } => write!(
                f,
                "image {} ({}): annotations {first} and {second} overlap with IoU {iou:.3}; merge into one box?",
                self.image_id, self.file_name
            ),
        }
    }
}

/// Reports manual annotations that break the visibility rule or look like
/// unmerged fragments. Report only; the dataset is not changed.
pub fn validate_manual(dataset: &Dataset, rules: &AnnotRules) -> Vec<Violation> {
    let mut out = Vec::new();
    for img in &dataset.images {
        let push = |out: &mut Vec<Violation>, kind| {
            out.push(Violation {
                image_id: img.id,
                file_name: img.file_name.clone(),
                kind,
            })
        };
        for (k, o) in img.objects.iter().enumerate() {
            if o.visible_fraction < rules.visible_min {
                push(
                    &mut out,
                    ViolationKind::LowVisibility {
                        annotation: k,
                        visible_fraction: o.visible_fraction,
                    },
                );
            }
        }
        for (i, a) in img.objects.iter().enumerate() {
            for (j, b) in img.objects.iter().enumerate().skip(i + 1) {
                if a.category != b.category
                    || a.visible_fraction < rules.split_side_min
                    || b.visible_fraction < rules.split_side_min
                {
                    continue;
                }
                let v = iou(&a.bbox, &b.bbox);
                if v > rules.merge_iou_min {
                    push(
                        &mut out,
                        ViolationKind::MergeCandidate {
                            first: i,
                            second: j,
                            iou: v,
                        },
                    );
                }
            }
        }
    }
    out
}
