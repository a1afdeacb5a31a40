//! COCO annotation and results JSON.
//!
//! Output is canonical: fixed key order, pretty-printed, boxes rounded to two
//! decimals, annotation ids renumbered `1..` in image order. Saving a loaded
//! file therefore reproduces it byte for byte.
//!
//! Toolkit-specific fields use an `x_` prefix (`x_visible_fraction`,
//! `x_source`, `x_split`, `x_color_mode`); unknown keys are ignored on read.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotatedObject, Category, Dataset, ImageRecord, Provenance, Source, Split};
use crate::error::{Error, Result};
use crate::eval::Detection;
use crate::geometry::{round2, BoundingBox};
use crate::raster::ColorMode;

#[derive(Debug, Serialize, Deserialize)]
struct CocoFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    info: Option<CocoInfo>,
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
    categories: Vec<CocoCategory>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct CocoInfo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_config_hash: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: u32,
    height: u32,
    #[serde(default)]
    x_split: Option<Split>,
    #[serde(default)]
    x_color_mode: Option<ColorMode>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    category_id: u32,
    bbox: [f64; 4],
    #[serde(default)]
    area: f64,
    #[serde(default)]
    iscrowd: u8,
    #[serde(default)]
    x_visible_fraction: Option<f64>,
    #[serde(default)]
    x_source: Option<Source>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoCategory {
    id: u32,
    name: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CocoResult {
    image_id: u64,
    category_id: u32,
    bbox: [f64; 4],
    score: f64,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_coco(path: &Path) -> Result<Dataset> {
    let text = read(path)?;
    parse_coco(&text).map_err(|e| match e {
        Error::Json(j) => Error::parse(path, &j),
        Error::Dataset(m) => Error::Dataset(format!("{}: {m}", path.display())),
        Error::UnknownCategory {
            category_id,
            context,
        } => Error::UnknownCategory {
            category_id,
            context: format!("{context} in {}", path.display()),
        },
        other => other,
    })
}

pub fn parse_coco(text: &str) -> Result<Dataset> {
    let file: CocoFile = serde_json::from_str(text)?;

    let mut cat_ids = HashSet::new();
    let categories: Vec<Category> = file
        .categories
        .into_iter()
        .map(|c| {
            if !cat_ids.insert(c.id) {
                return Err(Error::Dataset(format!("duplicate category id {}", c.id)));
            }
            Ok(Category {
                id: c.id,
                name: c.name,
            })
        })
        .collect::<Result<_>>()?;

    let mut index = HashMap::new();
    let mut images = Vec::with_capacity(file.images.len());
    for (k, im) in file.images.into_iter().enumerate() {
        if index.insert(im.id, k).is_some() {
            return Err(Error::Dataset(format!("duplicate image id {}", im.id)));
        }
        images.push(ImageRecord {
            id: im.id,
            file_name: im.file_name,
            width: im.width,
            height: im.height,
            color_mode: im.x_color_mode.unwrap_or_default(),
            split: im.x_split.unwrap_or_default(),
            objects: Vec::new(),
        });
    }

    let mut ann_ids = HashSet::new();
    for a in file.annotations {
        if !ann_ids.insert(a.id) {
            return Err(Error::Dataset(format!("duplicate annotation id {}", a.id)));
        }
        if a.iscrowd != 0 {
            return Err(Error::Dataset(format!(
                "annotation {}: crowd annotations are not supported",
                a.id
            )));
        }
        if !cat_ids.contains(&a.category_id) {
            return Err(Error::UnknownCategory {
                category_id: a.category_id,
                context: format!("annotation {} (image {})", a.id, a.image_id),
            });
        }
        let &k = index.get(&a.image_id).ok_or_else(|| {
            Error::Dataset(format!(
                "annotation {} references unknown image id {}",
                a.id, a.image_id
            ))
        })?;
        let [x, y, w, h] = a.bbox;
        let bbox = BoundingBox::new(x, y, w, h)
            .map_err(|e| Error::Dataset(format!("annotation {}: {e}", a.id)))?;
        let obj = AnnotatedObject::new(
            a.category_id,
            bbox,
            a.x_visible_fraction.unwrap_or(1.0),
            a.x_source.unwrap_or_default(),
        )
        .map_err(|e| Error::Dataset(format!("annotation {}: {e}", a.id)))?;
        images[k].objects.push(obj);
    }

    let provenance = file
        .info
        .map(|i| Provenance {
            master_seed: i.x_master_seed,
            config_hash: i.x_config_hash,
        })
        .unwrap_or_default();

    let d = Dataset {
        categories,
        images,
        provenance,
    };
    d.validate()?;
    Ok(d)
}

/// Canonical JSON text for a dataset.
pub fn to_coco_string(d: &Dataset) -> Result<String> {
    d.validate()?;
    let info = (d.provenance != Provenance::default()).then(|| CocoInfo {
        x_master_seed: d.provenance.master_seed,
        x_config_hash: d.provenance.config_hash.clone(),
    });
    let mut annotations = Vec::with_capacity(d.object_count());
    let mut next_id = 1u64;
    for img in &d.images {
        for o in &img.objects {
            let b = o.bbox.to_xywh().map(round2);
            annotations.push(CocoAnnotation {
                id: next_id,
                image_id: img.id,
                category_id: o.category,
                bbox: b,
                area: round2(b[2] * b[3]),
                iscrowd: 0,
                x_visible_fraction: Some(o.visible_fraction),
                x_source: Some(o.source),
            });
            next_id += 1;
        }
    }
    let file = CocoFile {
        info,
        images: d
            .images
            .iter()
            .map(|i| CocoImage {
                id: i.id,
                file_name: i.file_name.clone(),
                width: i.width,
                height: i.height,
                x_split: Some(i.split.clone()),
                x_color_mode: Some(i.color_mode),
            })
            .collect(),
        annotations,
        categories: d
            .categories
            .iter()
            .map(|c| CocoCategory {
                id: c.id,
                name: c.name.clone(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

pub fn save_coco(d: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, to_coco_string(d)?.as_bytes())
}

pub fn parse_results(text: &str) -> Result<Vec<Detection>> {
    let raw: Vec<CocoResult> = serde_json::from_str(text)?;
    raw.into_iter()
        .enumerate()
        .map(|(k, r)| {
            let [x, y, w, h] = r.bbox;
            let bbox = BoundingBox::new(x, y, w, h)
                .map_err(|e| Error::Dataset(format!("result {k}: {e}")))?;
            Detection::new(r.image_id, r.category_id, bbox, r.score)
                .map_err(|e| Error::Dataset(format!("result {k}: {e}")))
        })
        .collect()
}

pub fn load_results(path: &Path) -> Result<Vec<Detection>> {
    parse_results(&read(path)?).map_err(|e| match e {
        Error::Json(j) => Error::parse(path, &j),
        Error::Dataset(m) => Error::Dataset(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn to_results_string(dets: &[Detection]) -> Result<String> {
    let raw: Vec<CocoResult> = dets
        .iter()
        .map(|d| CocoResult {
            image_id: d.image_id,
            category_id: d.category_id,
            bbox: d.bbox.to_xywh().map(round2),
            score: d.score,
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&raw)?;
    s.push('\n');
    Ok(s)
}

pub fn save_results(dets: &[Detection], path: &Path) -> Result<()> {
    write_atomic(path, to_results_string(dets)?.as_bytes())
}
