use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ImageRecord, Provenance, Split};
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::rng::{derive_seed, rng_from_seed};

use super::derive::derive_rotscale;
use super::plan::{plan_composition, uniform, BackgroundSpec, CompositionPlan};
use super::render::render;
use super::{ComposerConfig, Pools};

/// Seed streams; each image index draws from its own seed in every stream.
pub const STREAM_PLAN: u64 = 1;
pub const STREAM_BG: u64 = 2;
pub const STREAM_DERIVE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthCounts {
    pub synthetic_bg: usize,
    pub negative_bg: usize,
    pub derived: usize,
}

impl SynthCounts {
    pub fn total(&self) -> usize {
        self.synthetic_bg + self.negative_bg + self.derived
    }
}

/// One finished image, handed to the caller's sink as soon as it is rendered.
#[derive(Debug, Clone)]
pub struct SynthImage {
    pub index: usize,
    pub record: ImageRecord,
    pub image: Raster,
}

/// Replay record for one output image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifestEntry {
    Composition {
        image_id: u64,
        file_name: String,
        split: Split,
        plan: CompositionPlan,
    },
    Derived {
        image_id: u64,
        file_name: String,
        split: Split,
        source_image_id: u64,
        rotation_deg: f64,
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub counts: SynthCounts,
    pub entries: Vec<ManifestEntry>,
}

impl SynthManifest {
    /// Pasted layers per composition, before pruning.
    pub fn layer_counts(&self) -> Vec<usize> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                ManifestEntry::Composition { plan, .. } => Some(plan.layers.len()),
                ManifestEntry::Derived { .. } => None,
            })
            .collect()
    }
}

/// Image `i` of the set: indices `[0, n_s)` are mosaic compositions,
/// `[n_s, n_s + n_n)` compositions on negative backgrounds, the rest
/// rotated/scaled copies of a randomly chosen mosaic composition.
pub(crate) fn composition_plan(pools: &Pools, cfg: &ComposerConfig, counts: &SynthCounts, master: u64, i: usize) -> Result<CompositionPlan> {
    let bg_seed = derive_seed(master, STREAM_BG, i as u64);
    let background = if i < counts.synthetic_bg {
        BackgroundSpec::Mosaic { seed: bg_seed }
    } else {
        if pools.negatives.is_empty() {
            return Err(Error::EmptyPool("negative"));
        }
        BackgroundSpec::Negative {
            index: rng_from_seed(bg_seed).random_range(0..pools.negatives.len()),
        }
    };
    plan_composition(&pools.cutouts, background, cfg, derive_seed(master, STREAM_PLAN, i as u64))
}

/// Generates `counts.total()` images. Every image is a pure function of
/// `(pools, cfg, master_seed, index)`, so images are produced in parallel and
/// the result does not depend on the number of worker threads. Images go to
/// `sink` as they finish; records come back in index order.
pub fn synthesize_set<F>(
    pools: &Pools,
    cfg: &ComposerConfig,
    counts: SynthCounts,
    master_seed: u64,
    sink: F,
) -> Result<(Dataset, SynthManifest)>
where
    F: Fn(SynthImage) -> Result<()> + Sync,
{
    cfg.validate()?;
    if pools.cutouts.is_empty() {
        return Err(Error::EmptyPool("cutout"));
    }
    if counts.negative_bg > 0 && pools.negatives.is_empty() {
        return Err(Error::EmptyPool("negative"));
    }
    if counts.synthetic_bg > 0 && pools.tiles.is_empty() {
        return Err(Error::EmptyPool("mosaic tile"));
    }
    if counts.derived > 0 && counts.synthetic_bg == 0 {
        return Err(Error::Config("derived images need at least one mosaic composition".into()));
    }
    let composed = counts.synthetic_bg + counts.negative_bg;

    let produce = |i: usize| -> Result<(ImageRecord, ManifestEntry)> {
        let id = i as u64 + 1;
        let split = if (counts.synthetic_bg..composed).contains(&i) {
            Split::TrainN
        } else {
            Split::TrainS
        };
        let file_name = format!("{split}_{i:06}.png");
        let (image, objects, entry) = if i < composed {
            let plan = composition_plan(pools, cfg, &counts, master_seed, i)?;
            let r = render(&plan, pools, cfg)?;
            let entry = ManifestEntry::Composition {
                image_id: id,
                file_name: file_name.clone(),
                split: split.clone(),
                plan,
            };
            (r.image, r.objects, entry)
        } else {
            let mut rng = rng_from_seed(derive_seed(master_seed, STREAM_DERIVE, i as u64));
            let source = rng.random_range(0..counts.synthetic_bg);
            let rotation_deg = uniform(&mut rng, cfg.derive_rotation_deg);
            let scale = uniform(&mut rng, cfg.derive_scale);
            let plan = composition_plan(pools, cfg, &counts, master_seed, source)?;
            let r = render(&plan, pools, cfg)?;
            let (image, objects) =
                derive_rotscale(&r.image, &r.objects, rotation_deg, scale, cfg.fill_value, cfg.prune_visible_min)?;
            let entry = ManifestEntry::Derived {
                image_id: id,
                file_name: file_name.clone(),
                split: split.clone(),
                source_image_id: source as u64 + 1,
                rotation_deg,
                scale,
            };
            (image, objects, entry)
        };
        let record = ImageRecord {
            id,
            file_name,
            width: image.width(),
            height: image.height(),
            color_mode: image.mode(),
            split,
            objects,
        };
        sink(SynthImage {
            index: i,
            record: record.clone(),
            image,
        })?;
        Ok((record, entry))
    };

    let results: Vec<(ImageRecord, ManifestEntry)> =
        (0..counts.total()).into_par_iter().map(produce).collect::<Result<_>>()?;
    let (images, entries): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let dataset = Dataset {
        categories: pools.categories.clone(),
        images,
        provenance: Provenance {
            master_seed: Some(master_seed),
            config_hash: None,
        },
    };
    dataset.validate()?;
    Ok((
        dataset,
        SynthManifest {
            master_seed,
            config_hash: None,
            counts,
            entries,
        },
    ))
}
