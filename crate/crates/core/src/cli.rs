//! End-to-end commands behind the `cpsynth` binary.
//!
//! Every command writes into an output directory together with the
//! canonical config (`config.json`) whose hash is embedded in its outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use crate::annotate::{select_object_mask, segment_controlled, validate_manual, MaskSet, Violation};
use crate::augment::apply;
use crate::coco::{load_coco, load_results, save_coco};
use crate::composer::{
    find_image, load_cutouts, load_negatives, load_tiles, read_category_manifest, synthesize_set, Pools, SynthImage,
};
use crate::config::RunConfig;
use crate::dataset::{AnnotatedObject, Dataset, ImageRecord, Provenance, Source, Split};
use crate::error::{Error, Result};
use crate::eval::{subset_report, EvalReport};
use crate::mask::BinaryMask;
use crate::raster::Raster;
use crate::rng::derive_seed;

/// Seed stream for augmentation previews.
pub const STREAM_AUGMENT: u64 = 4;

fn required(cfg: &RunConfig, p: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    cfg.path(p).ok_or_else(|| Error::Config(format!("paths.{name} is required for this command")))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

fn write_config(cfg: &RunConfig, out: &Path) -> Result<()> {
    write_text(&out.join("config.json"), &cfg.canonical_json())
}

fn provenance(cfg: &RunConfig) -> Provenance {
    Provenance {
        master_seed: Some(cfg.seed),
        config_hash: Some(cfg.hash()),
    }
}

/// Why one input image produced no annotation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotateFailure {
    pub stem: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotateReport {
    pub config_hash: String,
    pub annotated: usize,
    pub failures: Vec<AnnotateFailure>,
    pub violations: Vec<Violation>,
}

/// Candidate masks for `stem`: `<stem>.mask.png`, then `<stem>.mask.1.png`,
/// `<stem>.mask.2.png`, ... while they exist.
fn mask_files(dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let first = dir.join(format!("{stem}.mask.png"));
    if !first.is_file() {
        return Err(Error::io(
            first,
            std::io::Error::new(std::io::ErrorKind::NotFound, "mask file missing"),
        ));
    }
    let mut out = vec![first];
    for k in 1.. {
        let p = dir.join(format!("{stem}.mask.{k}.png"));
        if !p.is_file() {
            break;
        }
        out.push(p);
    }
    Ok(out)
}

struct Annotated {
    record: ImageRecord,
    image: Raster,
    mask: BinaryMask,
}

fn annotate_one(cfg: &RunConfig, dir: &Path, reference: Option<&Raster>, stem: &str, category: u32, id: u64) -> Result<Annotated> {
    let path = find_image(dir, stem).ok_or_else(|| {
        Error::io(
            dir.join(stem),
            std::io::Error::new(std::io::ErrorKind::NotFound, "image missing"),
        )
    })?;
    let image = Raster::load(&path)?;
    let (w, h) = image.dimensions();
    let rules = &cfg.annotate.rules;
    let set = match reference {
        Some(r) => segment_controlled(&image, r, cfg.annotate.segment_threshold, rules)?,
        None => {
            let masks = mask_files(dir, stem)?
                .iter()
                .map(|p| BinaryMask::load_png(p))
                .collect::<Result<Vec<_>>>()?;
            MaskSet::new(w, h, masks)?
        }
    };
    let mask = select_object_mask(&set, rules)?;
    let object = AnnotatedObject::new(category, mask.tight_bbox()?, 1.0, Source::MaskDerived)?;
    let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or(stem).to_string();
    Ok(Annotated {
        record: ImageRecord {
            id,
            file_name,
            width: w,
            height: h,
            color_mode: image.mode(),
            split: cfg.annotate.split.clone(),
            objects: vec![object],
        },
        image,
        mask,
    })
}

/// Annotates every manifest entry from its masks (or by controlled
/// segmentation). Images that fail are listed in the report while the rest
/// proceed. Writes `annotations.json`, `report.{json,txt}` and a `cutouts/`
/// directory that `synth` can load.
pub fn cmd_annotate(cfg: &RunConfig, out: &Path) -> Result<AnnotateReport> {
    cfg.validate()?;
    let dir = required(cfg, &cfg.paths.annotate_images, "annotate_images")?;
    let manifest = required(cfg, &cfg.paths.annotate_manifest, "annotate_manifest")?;
    let (categories, entries) = read_category_manifest(&manifest)?;
    let reference = cfg.path(&cfg.paths.reference_image).as_deref().map(Raster::load).transpose()?;

    let results: Vec<Result<Annotated>> = entries
        .par_iter()
        .enumerate()
        .map(|(i, (stem, cat))| annotate_one(cfg, &dir, reference.as_ref(), stem, *cat, i as u64 + 1))
        .collect();

    let cutouts = out.join("cutouts");
    create_dir(&cutouts)?;
    let mut dataset = Dataset::new(categories.clone())?;
    dataset.provenance = provenance(cfg);
    let mut failures = Vec::new();
    let mut csv = String::from("stem,category\n");
    for ((stem, cat), res) in entries.iter().zip(results) {
        match res {
            Ok(a) => {
                a.image.save(&cutouts.join(format!("{stem}.png")))?;
                a.mask.save_png(&cutouts.join(format!("{stem}.mask.png")))?;
                let name = &categories.iter().find(|c| c.id == *cat).expect("manifest category").name;
                csv.push_str(&format!("{stem},{name}\n"));
                dataset.images.push(a.record);
            }
            Err(e) => {
                log::warn!("{stem}: {e}");
                failures.push(AnnotateFailure {
                    stem: stem.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    write_text(&cutouts.join("manifest.csv"), &csv)?;
    save_coco(&dataset, &out.join("annotations.json"))?;

    let report = AnnotateReport {
        config_hash: cfg.hash(),
        annotated: dataset.images.len(),
        failures,
        violations: validate_manual(&dataset, &cfg.annotate.rules),
    };
    write_json(&out.join("report.json"), &report)?;
    let mut txt = format!(
        "annotated {} of {} images\nconfig {}\n",
        report.annotated,
        entries.len(),
        report.config_hash
    );
    for f in &report.failures {
        txt.push_str(&format!("failed {}: {}\n", f.stem, f.reason));
    }
    for v in &report.violations {
        txt.push_str(&format!("violation {v}\n"));
    }
    write_text(&out.join("report.txt"), &txt)?;
    write_config(cfg, out)?;
    log::info!("annotated {} images, {} failures", report.annotated, report.failures.len());
    Ok(report)
}

/// Loads cutouts, negatives and mosaic tiles named by the config.
pub fn load_pools(cfg: &RunConfig) -> Result<Pools> {
    let c = &cfg.composer;
    let cut_dir = required(cfg, &cfg.paths.cutouts, "cutouts")?;
    let manifest = cfg.path(&cfg.paths.cutout_manifest).unwrap_or_else(|| cut_dir.join("manifest.csv"));
    let (categories, cutouts) = load_cutouts(&cut_dir, &manifest, c.cutout_max_side)?;
    let negatives = match cfg.path(&cfg.paths.negatives) {
        Some(d) => load_negatives(&d, c.canvas_width, c.canvas_height)?,
        None => Vec::new(),
    };
    let tiles = match cfg.path(&cfg.paths.tiles).or(cfg.path(&cfg.paths.negatives)) {
        Some(d) => load_tiles(&d, c.canvas_width.max(c.canvas_height))?,
        None => Vec::new(),
    };
    log::info!(
        "pools: {} cutouts in {} categories, {} negatives, {} tiles",
        cutouts.len(),
        categories.len(),
        negatives.len(),
        tiles.len()
    );
    Ok(Pools {
        categories,
        cutouts,
        negatives,
        tiles,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSummary {
    pub config_hash: String,
    pub images: usize,
    pub objects: usize,
    pub layers: usize,
    pub per_split: BTreeMap<String, usize>,
}

fn staging_dir(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_else(|| "out".into());
    name.push(".tmp");
    out.with_file_name(name)
}

/// Refuses to replace a directory that is not a previous run's output.
fn check_replaceable(out: &Path) -> Result<()> {
    if !out.exists() {
        return Ok(());
    }
    let empty = fs::read_dir(out).map_err(|e| Error::io(out, e))?.next().is_none();
    if !empty && !out.join("config.json").is_file() {
        return Err(Error::Config(format!(
            "{} exists and is not a cpsynth output directory",
            out.display()
        )));
    }
    Ok(())
}

fn synth_into(cfg: &RunConfig, pools: &Pools, dir: &Path) -> Result<SynthSummary> {
    let images_dir = dir.join("images");
    create_dir(&images_dir)?;
    let total = cfg.counts.total();
    let done = AtomicUsize::new(0);
    let step = (total / 10).max(1);
    let sink = |img: SynthImage| -> Result<()> {
        img.image.save(&images_dir.join(&img.record.file_name))?;
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        if n.is_multiple_of(step) || n == total {
            log::info!("rendered {n}/{total}");
        }
        Ok(())
    };
    let (mut dataset, mut manifest) = synthesize_set(pools, &cfg.composer, cfg.counts, cfg.seed, sink)?;
    let hash = cfg.hash();
    dataset.provenance.config_hash = Some(hash.clone());
    manifest.config_hash = Some(hash.clone());
    save_coco(&dataset, &dir.join("annotations.json"))?;
    write_json(&dir.join("manifest.json"), &manifest)?;
    write_config(cfg, dir)?;

    let mut per_split = BTreeMap::new();
    for img in &dataset.images {
        *per_split.entry(img.split.to_string()).or_default() += 1;
    }
    let summary = SynthSummary {
        config_hash: hash,
        images: dataset.images.len(),
        objects: dataset.object_count(),
        layers: manifest.layer_counts().iter().sum(),
        per_split,
    };
    log::info!(
        "synthesized {} images with {} objects ({} pasted layers)",
        summary.images,
        summary.objects,
        summary.layers
    );
    Ok(summary)
}

/// Synthesizes the configured set into `out` (images, `annotations.json`,
/// `manifest.json`). Work happens in `<out>.tmp`, which replaces `out` only
/// on success and is removed on failure.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<SynthSummary> {
    cfg.validate()?;
    check_replaceable(out)?;
    let pools = load_pools(cfg)?;
    let tmp = staging_dir(out);
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    match synth_into(cfg, &pools, &tmp) {
        Ok(summary) => {
            if out.exists() {
                fs::remove_dir_all(out).map_err(|e| Error::io(out, e))?;
            }
            fs::rename(&tmp, out).map_err(|e| Error::io(out, e))?;
            Ok(summary)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&tmp);
            Err(e)
        }
    }
}

/// Directory holding a dataset's images: `images/` next to the COCO file
/// when present, else the COCO file's own directory.
pub fn default_image_dir(coco: &Path) -> PathBuf {
    let base = coco.parent().unwrap_or(Path::new(".")).to_path_buf();
    let nested = base.join("images");
    if nested.is_dir() {
        nested
    } else {
        base
    }
}

/// Writes `count` augmented samples (cycling through the dataset) with
/// their annotations, for visual inspection of the configured pipeline.
pub fn cmd_augment_preview(cfg: &RunConfig, dataset: &Path, images: Option<&Path>, count: usize, out: &Path) -> Result<Dataset> {
    cfg.validate()?;
    let src = load_coco(dataset)?;
    if src.images.is_empty() {
        return Err(Error::Dataset(format!("{} has no images", dataset.display())));
    }
    let image_dir = images.map(Path::to_path_buf).unwrap_or_else(|| default_image_dir(dataset));
    let pipeline = cfg.augment.pipeline();
    create_dir(out)?;
    let records: Vec<ImageRecord> = (0..count)
        .into_par_iter()
        .map(|i| {
            let rec = &src.images[i % src.images.len()];
            let img = Raster::load(&image_dir.join(&rec.file_name))?;
            let (img, objects) = apply(&pipeline, &img, &rec.objects, derive_seed(cfg.seed, STREAM_AUGMENT, i as u64))?;
            let file_name = format!("preview_{i:04}.png");
            img.save(&out.join(&file_name))?;
            Ok(ImageRecord {
                id: i as u64 + 1,
                file_name,
                width: img.width(),
                height: img.height(),
                color_mode: img.mode(),
                split: rec.split.clone(),
                objects,
            })
        })
        .collect::<Result<_>>()?;
    let preview = Dataset {
        categories: src.categories.clone(),
        images: records,
        provenance: provenance(cfg),
    };
    save_coco(&preview, &out.join("annotations.json"))?;
    write_config(cfg, out)?;
    Ok(preview)
}

/// Adds the images of a negative-set COCO file to `gt` under the `negative`
/// split. Image ids must not collide and the images must be unannotated.
pub fn merge_negatives(gt: &mut Dataset, negatives: &Dataset) -> Result<()> {
    let ids: std::collections::HashSet<u64> = gt.images.iter().map(|i| i.id).collect();
    for img in &negatives.images {
        if !img.objects.is_empty() {
            return Err(Error::Dataset(format!(
                "negative image {} ({}) has annotations",
                img.id, img.file_name
            )));
        }
        if ids.contains(&img.id) {
            return Err(Error::Dataset(format!(
                "negative image id {} collides with a ground-truth image",
                img.id
            )));
        }
        let mut img = img.clone();
        img.split = Split::Negative;
        gt.images.push(img);
    }
    Ok(())
}

/// Scores `results` against `gt` and writes `report.json`, `report.txt` and
/// `confusion.csv`.
pub fn cmd_eval(
    cfg: &RunConfig,
    gt: &Path,
    results: &Path,
    negatives: Option<&Path>,
    subsets: &[String],
    out: &Path,
) -> Result<EvalReport> {
    cfg.validate()?;
    let mut truth = load_coco(gt)?;
    if let Some(n) = negatives {
        merge_negatives(&mut truth, &load_coco(n)?)?;
    }
    let dets = load_results(results)?;
    let mut report = subset_report(&truth, &dets, &cfg.eval, subsets)?;
    report.config_hash = Some(cfg.hash());
    create_dir(out)?;
    write_json(&out.join("report.json"), &report)?;
    write_text(&out.join("report.txt"), &report.to_text_table())?;
    write_text(&out.join("confusion.csv"), &report.confusion.to_csv())?;
    write_config(cfg, out)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassFrequency {
    pub category_id: u32,
    pub name: String,
    pub count: usize,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitStats {
    pub split: String,
    pub images: usize,
    pub objects: usize,
    pub classes: Vec<ClassFrequency>,
}

/// Relative class frequencies per split. Splits without objects get an
/// empty class list.
pub fn class_stats(d: &Dataset) -> Vec<SplitStats> {
    let mut images: BTreeMap<Split, usize> = BTreeMap::new();
    for img in &d.images {
        *images.entry(img.split.clone()).or_default() += 1;
    }
    d.class_counts()
        .into_iter()
        .map(|(split, counts)| {
            let objects: usize = counts.values().sum();
            let classes = d
                .categories
                .iter()
                .filter_map(|c| {
                    counts.get(&c.id).map(|&count| ClassFrequency {
                        category_id: c.id,
                        name: c.name.clone(),
                        count,
                        frequency: count as f64 / objects as f64,
                    })
                })
                .collect();
            SplitStats {
                images: images[&split],
                split: split.to_string(),
                objects,
                classes,
            }
        })
        .collect()
}

/// Writes `class_frequencies.csv` and `class_frequencies.json`.
pub fn cmd_stats(dataset: &Path, out: &Path) -> Result<Vec<SplitStats>> {
    let d = load_coco(dataset)?;
    let stats = class_stats(&d);
    create_dir(out)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |source| Error::Csv {
        path: out.join("class_frequencies.csv"),
        source,
    };
    w.write_record(["split", "category_id", "category", "count", "frequency"]).map_err(csv_err)?;
    for s in &stats {
        for c in &s.classes {
            w.write_record([
                s.split.clone(),
                c.category_id.to_string(),
                c.name.clone(),
                c.count.to_string(),
                format!("{:.6}", c.frequency),
            ])
            .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::io(out, std::io::Error::other(e.to_string())))?;
    fs::write(out.join("class_frequencies.csv"), bytes).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("class_frequencies.json"), &stats)?;
    Ok(stats)
}
