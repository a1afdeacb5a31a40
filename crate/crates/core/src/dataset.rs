//! In-memory dataset model: categories, images, and their annotated objects.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::mask::BinaryMask;
use crate::raster::{longest_side_target, ColorMode, Raster};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: u32,
    pub name: String,
}

/// Where an annotation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    #[default]
    Manual,
    MaskDerived,
    Synthetic,
}

/// Dataset split an image belongs to.
///
/// Test images may carry a subset suffix (`test_r`, `test_i`, ...).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Split {
    #[default]
    TrainB,
    TrainS,
    TrainN,
    Val,
    Test,
    TestSubset(String),
    Negative,
}

impl Split {
    pub fn as_string(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::TrainB => f.write_str("train_b"),
            Split::TrainS => f.write_str("train_s"),
            Split::TrainN => f.write_str("train_n"),
            Split::Val => f.write_str("val"),
            Split::Test => f.write_str("test"),
            Split::TestSubset(s) => write!(f, "test_{s}"),
            Split::Negative => f.write_str("negative"),
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "train_b" => Split::TrainB,
            "train_s" => Split::TrainS,
            "train_n" => Split::TrainN,
            "val" => Split::Val,
            "test" => Split::Test,
            "negative" | "negatives" => Split::Negative,
            other => match other.strip_prefix("test_") {
                Some(sub) if !sub.is_empty() => Split::TestSubset(sub.to_string()),
                _ => return Err(Error::Dataset(format!("unknown split tag `{other}`"))),
            },
        })
    }
}

impl Serialize for Split {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Split {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedObject {
    pub category: u32,
    pub bbox: BoundingBox,
    /// Share of the object visible in the image, in `[0, 1]`.
    pub visible_fraction: f64,
    pub source: Source,
}

impl AnnotatedObject {
    pub fn new(category: u32, bbox: BoundingBox, visible_fraction: f64, source: Source) -> Result<Self> {
        if !(0.0..=1.0).contains(&visible_fraction) {
            return Err(Error::Dataset(format!(
                "visible fraction {visible_fraction} outside [0, 1]"
            )));
        }
        Ok(Self {
            category,
            bbox,
            visible_fraction,
            source,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    pub color_mode: ColorMode,
    pub split: Split,
    pub objects: Vec<AnnotatedObject>,
}

/// Reproducibility metadata carried alongside a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub categories: Vec<Category>,
    pub images: Vec<ImageRecord>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(categories: Vec<Category>) -> Result<Self> {
        let d = Dataset {
            categories,
            ..Default::default()
        };
        d.validate()?;
        Ok(d)
    }

    pub fn category(&self, id: u32) -> Option<&Category> {
        self.categories.iter().find(|c| c.id == id)
    }

    pub fn category_by_name(&self, name: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn object_count(&self) -> usize {
        self.images.iter().map(|i| i.objects.len()).sum()
    }

    /// Checks id uniqueness and that every object references a known category.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        let mut names = HashSet::new();
        for c in &self.categories {
            if c.id == 0 {
                return Err(Error::Dataset("category id 0 is reserved".into()));
            }
            if !ids.insert(c.id) {
                return Err(Error::Dataset(format!("duplicate category id {}", c.id)));
            }
            if !names.insert(c.name.as_str()) {
                return Err(Error::Dataset(format!("duplicate category name `{}`", c.name)));
            }
        }
        let mut image_ids = HashSet::new();
        for img in &self.images {
            if !image_ids.insert(img.id) {
                return Err(Error::Dataset(format!("duplicate image id {}", img.id)));
            }
            for (k, o) in img.objects.iter().enumerate() {
                if !ids.contains(&o.category) {
                    return Err(Error::UnknownCategory {
                        category_id: o.category,
                        context: format!("object {k} of image {}", img.id),
                    });
                }
            }
        }
        Ok(())
    }

    /// Objects per category id, per split.
    pub fn class_counts(&self) -> BTreeMap<Split, BTreeMap<u32, usize>> {
        let mut out: BTreeMap<Split, BTreeMap<u32, usize>> = BTreeMap::new();
        for img in &self.images {
            let entry = out.entry(img.split.clone()).or_default();
            for o in &img.objects {
                *entry.entry(o.category).or_default() += 1;
            }
        }
        out
    }
}

/// Resizes an image so its longest side is at most `max_side` and scales the
/// record's boxes (and any masks) by the same per-axis factors.
pub fn resize_longest_annotated(
    record: &ImageRecord,
    img: &Raster,
    masks: &[BinaryMask],
    max_side: u32,
) -> Result<(ImageRecord, Raster, Vec<BinaryMask>)> {
    let (w, h) = longest_side_target(img.width(), img.height(), max_side.max(1));
    if (w, h) == img.dimensions() {
        return Ok((record.clone(), img.clone(), masks.to_vec()));
    }
    let sx = w as f64 / img.width() as f64;
    let sy = h as f64 / img.height() as f64;
    let mut out = record.clone();
    out.width = w;
    out.height = h;
    for o in &mut out.objects {
        o.bbox = o.bbox.scaled(sx, sy)?;
    }
    let masks = masks.iter().map(|m| m.resize_nearest(w, h)).collect();
    Ok((out, img.resize(w, h), masks))
}
