//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use cpsynth::annotate::{annotate_single, clean_mask, is_background, AnnotRules, MaskSet};
use cpsynth::cli::{cmd_annotate, cmd_synth, load_pools};
use cpsynth::coco::{load_coco, save_results};
use cpsynth::composer::{transform_cutout, ManifestEntry, SynthCounts, SynthManifest};
use cpsynth::eval::{ap50, evaluate, subset_report, Detection, EvalConfig};
use cpsynth::geometry::BoundingBox;
use cpsynth::rng::rng_from_seed;
use cpsynth::{iou, AnnotatedObject, BinaryMask, Category, ColorMode, Dataset, ImageRecord, Source, Split};
use rand::Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox::new(x, y, w, h).unwrap()
}

fn record(id: u64, split: Split, objects: Vec<(u32, BoundingBox)>) -> ImageRecord {
    ImageRecord {
        id,
        file_name: format!("img_{id}.png"),
        width: 100,
        height: 100,
        color_mode: ColorMode::Rgb,
        split,
        objects: objects
            .into_iter()
            .map(|(c, b)| AnnotatedObject::new(c, b, 1.0, Source::Manual).unwrap())
            .collect(),
    }
}

fn categories(n: u32) -> Vec<Category> {
    (1..=n).map(|id| Category { id, name: format!("c{id}") }).collect()
}

fn det(image_id: u64, category_id: u32, bbox: BoundingBox, score: f64) -> Detection {
    Detection::new(image_id, category_id, bbox, score).unwrap()
}

// ---------------------------------------------------------------------------

/// Known single-object masks with specks and a hole, plus a full-frame
/// candidate that must be rejected as background.
fn annotation_from_masks() -> Check {
    let rules = AnnotRules::default();
    let mut rng = rng_from_seed(501);
    let n = 50;
    let mut exact = 0;
    let mut rejected = 0;
    for i in 0..n {
        let (w, h) = (rng.random_range(120..260u32), rng.random_range(100..220u32));
        let (mut mask, rect) = common::ellipse_mask(w, h, &mut rng);
        // a 2x2 speck in a corner well away from the object
        let corners = [(0, 0), (w - 2, 0), (0, h - 2), (w - 2, h - 2)];
        let free = |&(x, y): &(u32, u32)| {
            (x.saturating_sub(2)..(x + 4).min(w)).all(|xx| (y.saturating_sub(2)..(y + 4).min(h)).all(|yy| !mask.get(xx, yy)))
        };
        let &(sx, sy) = corners.iter().find(|c| free(c)).ok_or("no free corner")?;
        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            mask.set(sx + dx, sy + dy, true);
        }
        // a 2x2 hole at the centre
        let (cx, cy) = ((rect.x0 + rect.x1) / 2, (rect.y0 + rect.y1) / 2);
        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            mask.set(cx + dx, cy + dy, false);
        }
        let full = BinaryMask::from_rect(w, h, 0, 0, w, h);
        if is_background(&full, &rules).map_err(err)? && !is_background(&clean_mask(&mask, &rules), &rules).map_err(err)? {
            rejected += 1;
        }
        let set = MaskSet::new(w, h, vec![full, mask]).map_err(err)?;
        let obj = annotate_single(&set, 1 + (i % 3), &rules).map_err(err)?;
        if obj.bbox == rect.to_bbox() {
            exact += 1;
        }
    }
    ensure(exact == n && rejected == n, || {
        format!("exact boxes {exact}/{n}, full-frame rejected {rejected}/{n}")
    })?;
    Ok(format!("exact boxes {exact}/{n}, full-frame rejected {rejected}/{n}"))
}

/// AP by explicit enumeration of score thresholds: the matching is redone
/// from scratch on the detections at or above each threshold.
fn oracle_ap50(images: &[ImageRecord], dets: &[Detection], n_classes: u32) -> Option<f64> {
    let mut aps = Vec::new();
    for c in 1..=n_classes {
        let n_gt: usize = images.iter().map(|i| i.objects.iter().filter(|o| o.category == c).count()).sum();
        if n_gt == 0 {
            continue;
        }
        let mine: Vec<&Detection> = dets.iter().filter(|d| d.category_id == c).collect();
        let mut thresholds: Vec<f64> = mine.iter().map(|d| d.score).collect();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let mut points = Vec::new();
        for &t in &thresholds {
            let kept: Vec<&Detection> = mine.iter().copied().filter(|d| d.score >= t).collect();
            let mut tp = 0;
            for img in images {
                let gts: Vec<BoundingBox> = img.objects.iter().filter(|o| o.category == c).map(|o| o.bbox).collect();
                let mut used = vec![false; gts.len()];
                let mut here: Vec<(usize, &Detection)> =
                    kept.iter().copied().filter(|d| d.image_id == img.id).enumerate().collect();
                here.sort_by(|a, b| b.1.score.partial_cmp(&a.1.score).unwrap().then(a.0.cmp(&b.0)));
                for (_, d) in here {
                    let mut best: Option<(usize, f64)> = None;
                    for (g, gt) in gts.iter().enumerate() {
                        let v = iou(&d.bbox, gt);
                        if !used[g] && v >= 0.5 && best.is_none_or(|(_, bv)| v > bv) {
                            best = Some((g, v));
                        }
                    }
                    if let Some((g, _)) = best {
                        used[g] = true;
                        tp += 1;
                    }
                }
            }
            points.push((tp as f64 / n_gt as f64, tp as f64 / kept.len() as f64));
        }
        let mut ap = 0.0;
        let mut prev = 0.0;
        for k in 0..points.len() {
            let best_precision = points[k..].iter().map(|p| p.1).fold(0.0, f64::max);
            ap += (points[k].0 - prev) * best_precision;
            prev = points[k].0;
        }
        aps.push(ap);
    }
    (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
}

fn ap_matches_enumeration_oracle() -> Check {
    let mut rng = rng_from_seed(777);
    let scores = [0.1, 0.3, 0.5, 0.5, 0.7, 0.9, 0.95];
    let mut worst = 0.0f64;
    let mut defined = 0;
    let n = 200;
    for case in 0..n {
        let n_classes = rng.random_range(1..=3u32);
        let n_images = rng.random_range(1..=2u64);
        let grid_box = |rng: &mut cpsynth::rng::DetRng| {
            bx(
                rng.random_range(0..6) as f64,
                rng.random_range(0..6) as f64,
                rng.random_range(1..=5) as f64,
                rng.random_range(1..=5) as f64,
            )
        };
        let mut images: Vec<ImageRecord> = (1..=n_images).map(|id| record(id, Split::Test, vec![])).collect();
        for _ in 0..rng.random_range(0..=3) {
            let k = rng.random_range(0..images.len());
            let c = rng.random_range(1..=n_classes);
            let b = grid_box(&mut rng);
            images[k].objects.push(AnnotatedObject::new(c, b, 1.0, Source::Manual).unwrap());
        }
        let dets: Vec<Detection> = (0..rng.random_range(0..=5))
            .map(|_| {
                let id = rng.random_range(1..=n_images);
                let c = rng.random_range(1..=n_classes);
                let s = scores[rng.random_range(0..scores.len())];
                det(id, c, grid_box(&mut rng), s)
            })
            .collect();
        let refs: Vec<&ImageRecord> = images.iter().collect();
        let got = ap50(&categories(n_classes), &refs, &dets).map_err(err)?.mean;
        let want = oracle_ap50(&images, &dets, n_classes);
        match (got, want) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                defined += 1;
                worst = worst.max((g - w).abs());
                ensure((g - w).abs() <= 1e-12, || format!("case {case}: ap50 {g} vs oracle {w}"))?;
            }
            _ => return Err(format!("case {case}: ap50 {got:?} vs oracle {want:?}")),
        }
    }
    Ok(format!("{n} instances ({defined} with ground truth), max |diff| {worst:e}"))
}

fn subset_ap_is_not_additive() -> Check {
    let gt_box = bx(10.0, 10.0, 20.0, 20.0);
    let mut d = Dataset::new(categories(1)).map_err(err)?;
    d.images.push(record(1, Split::TestSubset("a".into()), vec![(1, gt_box)]));
    d.images.push(record(2, Split::TestSubset("b".into()), vec![(1, gt_box)]));
    let dets = vec![
        det(1, 1, gt_box, 0.9),
        det(2, 1, bx(60.0, 60.0, 20.0, 20.0), 0.95),
        det(2, 1, gt_box, 0.5),
    ];
    let r = subset_report(&d, &dets, &EvalConfig::default(), &["test_a".into(), "test_b".into()]).map_err(err)?;
    let a = r.subsets[0].ap50.ok_or("subset a undefined")?;
    let b = r.subsets[1].ap50.ok_or("subset b undefined")?;
    let pooled = r.union.ap50.ok_or("union undefined")?;
    let weighted = (a * r.subsets[0].n_gt as f64 + b * r.subsets[1].n_gt as f64)
        / (r.subsets[0].n_gt + r.subsets[1].n_gt) as f64;
    ensure((a - 1.0).abs() < 1e-12 && (b - 0.5).abs() < 1e-12, || format!("subset AP {a}, {b}"))?;
    ensure((pooled - 2.0 / 3.0).abs() < 1e-12, || format!("pooled AP {pooled}, expected 2/3"))?;
    ensure((pooled - weighted).abs() > 0.01, || format!("pooled {pooled} vs weighted mean {weighted}"))?;
    Ok(format!("pooled {pooled:.4} vs weighted mean {weighted:.4}"))
}

fn fp_n_matches_hand_count() -> Check {
    let mut rng = rng_from_seed(31);
    let scores = [0.01, 0.05, 0.0999, 0.10, 0.1001, 0.3, 0.8, 0.99];
    let mut d = Dataset::new(categories(2)).map_err(err)?;
    d.images.push(record(1, Split::Test, vec![(1, bx(0.0, 0.0, 10.0, 10.0))]));
    let mut dets = Vec::new();
    let mut hand = 0usize;
    for k in 0..100u64 {
        let id = 2 + k;
        d.images.push(record(id, Split::Negative, vec![]));
        for _ in 0..rng.random_range(0..=5) {
            let s = scores[rng.random_range(0..scores.len())];
            if s >= 0.10 {
                hand += 1;
            }
            dets.push(det(id, rng.random_range(1..=2), bx(5.0, 5.0, 20.0, 20.0), s));
        }
    }
    let r = evaluate(&d, &dets, &EvalConfig::default()).map_err(err)?;
    let fp = r.fp_n.ok_or("no FP_N section")?;
    let want = hand as f64 / 100.0;
    ensure(fp.value == want && fp.n_images == 100 && fp.min_confidence == 0.10, || {
        format!("fp_n {} over {} images, hand count {want}", fp.value, fp.n_images)
    })?;
    Ok(format!("fp_n {} = {hand} planted detections / 100 images", fp.value))
}

fn confusion_matrix_hand_computed() -> Check {
    let (a, b, c) = (1u32, 2u32, 3u32);
    let g = bx(0.0, 0.0, 10.0, 10.0);
    let g2 = bx(50.0, 50.0, 10.0, 10.0);
    let mut d = Dataset::new(categories(3)).map_err(err)?;
    let t = Split::Test;
    d.images.push(record(1, t.clone(), vec![(a, g)]));
    d.images.push(record(2, t.clone(), vec![(b, g)]));
    d.images.push(record(3, t.clone(), vec![(c, g)]));
    d.images.push(record(4, t.clone(), vec![]));
    d.images.push(record(5, t.clone(), vec![(a, g)]));
    d.images.push(record(6, t.clone(), vec![(a, g), (b, g2)]));
    d.images.push(record(7, t.clone(), vec![(c, g)]));
    d.images.push(record(8, t.clone(), vec![(b, g)]));
    d.images.push(record(9, t.clone(), vec![(a, g), (a, g2)]));
    d.images.push(record(10, t, vec![(c, g)]));
    let dets = vec![
        det(1, a, g, 0.9),                       // (A, A)
        det(2, a, g, 0.8),                       // (B, A)
        det(3, c, g, 0.2),                       // below 0.25: (C, bg)
        det(4, b, g, 0.6),                       // (bg, B)
        det(5, a, bx(0.0, 0.0, 10.0, 4.0), 0.9), // IoU 0.4: (A, bg) + (bg, A)
        det(6, b, g, 0.7),                       // (A, B)
        det(6, a, g2, 0.7),                      // (B, A)
        det(7, c, bx(0.0, 0.0, 10.0, 5.0), 0.3), // IoU 0.5: (C, C)
        det(8, b, bx(0.0, 0.0, 10.0, 8.0), 0.8), // duplicate: (bg, B)
        det(8, b, g, 0.9),                       // (B, B)
        det(9, a, g, 0.25),                      // at the threshold: (A, A); g2 missed: (A, bg)
        det(10, a, g, 0.5),                      // IoU tie, lower score: (bg, A)
        det(10, c, g, 0.99),                     // (C, C)
    ];
    let r = evaluate(&d, &dets, &EvalConfig::default()).map_err(err)?;
    let m = &r.confusion;
    // rows truth A, B, C, background; columns predicted in the same order
    let want: [[u64; 4]; 4] = [[2, 1, 0, 2], [2, 1, 0, 0], [0, 0, 2, 1], [2, 2, 0, 0]];
    let got: Vec<Vec<u64>> = m.cells.clone();
    ensure(m.min_confidence == 0.25 && m.iou_threshold == 0.45, || {
        format!("thresholds {} / {}", m.min_confidence, m.iou_threshold)
    })?;
    ensure(got == want.map(|r| r.to_vec()).to_vec(), || format!("cells {got:?}, expected {want:?}"))?;
    Ok("16 cells match, background row and column included".into())
}

fn run_cli(dir: &Path, jobs: usize, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cpsynth"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("CPSYNTH_OUT")
        .args(["--config", "run.json", "--jobs", &jobs.to_string()])
        .args(args)
        .output()
        .map_err(err)?;
    ensure(out.status.success(), || {
        format!("cpsynth {args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn files_under(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// annotate -> synth -> eval through the binary, twice with the same seed and
/// different thread counts.
fn pipeline_is_deterministic() -> Check {
    let root = tempfile::tempdir().map_err(err)?;
    let root = root.path();
    common::write_annotate_inputs(&root.join("photos"), 12, 5);
    common::write_backgrounds(&root.join("negatives"), 6, 700, 640, 6);
    let config = r#"{
  "schema_version": 1,
  "seed": 4242,
  "paths": {
    "annotate_images": "../photos",
    "annotate_manifest": "../photos/manifest.csv",
    "cutouts": "annotate/cutouts",
    "negatives": "../negatives"
  },
  "counts": {"synthetic_bg": 12, "negative_bg": 6, "derived": 6}
}
"#;
    let runs = [("run_a", 1usize), ("run_b", 3usize)];
    for (name, jobs) in runs {
        let dir = root.join(name);
        fs::create_dir_all(&dir).map_err(err)?;
        fs::write(dir.join("run.json"), config).map_err(err)?;
        run_cli(&dir, jobs, &["--out", "annotate", "annotate"])?;
        run_cli(&dir, jobs, &["--out", "synth", "synth"])?;
    }
    // detections: the first run's ground truth, jittered
    let gt = load_coco(&root.join("run_a/synth/annotations.json")).map_err(err)?;
    let mut dets = Vec::new();
    for img in &gt.images {
        for (k, o) in img.objects.iter().enumerate() {
            let shift = (img.id % 4) as f64;
            let b = bx(o.bbox.x() + shift, o.bbox.y(), o.bbox.w(), o.bbox.h());
            dets.push(det(img.id, o.category, b, ((img.id as usize * 7 + k * 13) % 100) as f64 / 100.0));
        }
    }
    save_results(&dets, &root.join("detections.json")).map_err(err)?;
    for (name, jobs) in runs {
        run_cli(&root.join(name), jobs, &["--out", "eval", "eval", "--gt", "synth/annotations.json", "--results", "../detections.json"])?;
    }
    let mut compared = 0;
    for stage in ["annotate", "synth", "eval"] {
        let a = files_under(&root.join("run_a").join(stage));
        let b = files_under(&root.join("run_b").join(stage));
        ensure(a.keys().eq(b.keys()), || format!("{stage}: file sets differ"))?;
        for (k, v) in &a {
            ensure(b[k] == *v, || format!("{stage}/{k} differs between --jobs 1 and --jobs 3"))?;
        }
        compared += a.len();
    }
    for must in ["annotate/annotations.json", "synth/annotations.json", "synth/manifest.json", "eval/report.json"] {
        ensure(root.join("run_a").join(must).is_file(), || format!("{must} missing"))?;
    }
    Ok(format!("{compared} files byte-identical across --jobs 1 and --jobs 3"))
}

/// The full-size set: timing, object-count mean, and a pixel-level replay of
/// the occlusion pruning on a sample of compositions.
fn paper_scale_synthesis() -> Check {
    let root = tempfile::tempdir().map_err(err)?;
    let root = root.path();
    common::write_annotate_inputs(&root.join("photos"), 60, 11);
    common::write_backgrounds(&root.join("negatives"), 40, 800, 640, 12);
    let mut cfg = common::pipeline_config(root, 2024);
    let report = cmd_annotate(&cfg, &root.join("annotate")).map_err(err)?;
    ensure(report.failures.is_empty(), || format!("annotation failures {:?}", report.failures))?;
    cfg.paths.cutouts = Some(root.join("annotate/cutouts"));
    cfg.counts = SynthCounts {
        synthetic_bg: 4000,
        negative_bg: 2000,
        derived: 2000,
    };
    let out = root.join("synth");
    let start = Instant::now();
    let summary = cmd_synth(&cfg, &out).map_err(err)?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30 * 60), || format!("took {elapsed:?}"))?;
    let files = fs::read_dir(out.join("images")).map_err(err)?.count();
    ensure(summary.images == 8000 && files == 8000, || format!("{} images, {files} files", summary.images))?;

    let manifest: SynthManifest =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).map_err(err)?).map_err(err)?;
    let layers = manifest.layer_counts();
    let mean = layers.iter().sum::<usize>() as f64 / layers.len() as f64;
    ensure(layers.len() == 6000 && (mean - 16.0).abs() <= 0.5, || {
        format!("{} compositions, mean layers {mean}", layers.len())
    })?;

    let coco = load_coco(&out.join("annotations.json")).map_err(err)?;
    let min = cfg.composer.prune_visible_min;
    let low = coco.images.iter().flat_map(|i| &i.objects).filter(|o| o.visible_fraction < min).count();
    ensure(low == 0, || format!("{low} retained objects below visible fraction {min}"))?;

    let pools = load_pools(&cfg).map_err(err)?;
    let by_id: BTreeMap<u64, &ImageRecord> = coco.images.iter().map(|i| (i.id, i)).collect();
    let mut violations = 0;
    let mut checked_layers = 0;
    let sample = manifest.entries.iter().filter_map(|e| match e {
        ManifestEntry::Composition { image_id, plan, .. } => Some((*image_id, plan)),
        ManifestEntry::Derived { .. } => None,
    });
    for (image_id, plan) in sample.take(100) {
        let (w, h) = (plan.width as i64, plan.height as i64);
        let mut owner = vec![usize::MAX; (w * h) as usize];
        let mut totals = Vec::new();
        let mut extents = Vec::new();
        for (i, l) in plan.layers.iter().enumerate() {
            let mask = transform_cutout(&pools.cutouts[l.cutout], l.rotation_deg, l.scale).1;
            totals.push(mask.pixel_count());
            let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
            for my in 0..mask.height() {
                for mx in 0..mask.width() {
                    if !mask.get(mx, my) {
                        continue;
                    }
                    let (cx, cy) = (l.x + mx as i64, l.y + my as i64);
                    (x0, y0, x1, y1) = (x0.min(cx), y0.min(cy), x1.max(cx + 1), y1.max(cy + 1));
                    if (0..w).contains(&cx) && (0..h).contains(&cy) {
                        owner[(cy * w + cx) as usize] = i;
                    }
                }
            }
            let clipped = (x0.max(0), y0.max(0), x1.min(w), y1.min(h));
            extents.push(clipped);
        }
        let mut want = Vec::new();
        for (i, l) in plan.layers.iter().enumerate() {
            let visible = owner.iter().filter(|&&o| o == i).count();
            let vf = visible as f64 / totals[i] as f64;
            if vf >= min {
                let (x0, y0, x1, y1) = extents[i];
                let cat = pools.cutouts[l.cutout].category;
                want.push((cat, [x0 as f64, y0 as f64, (x1 - x0) as f64, (y1 - y0) as f64], vf));
            }
            checked_layers += 1;
        }
        let got: Vec<(u32, [f64; 4], f64)> = by_id[&image_id]
            .objects
            .iter()
            .map(|o| (o.category, o.bbox.to_xywh(), o.visible_fraction))
            .collect();
        if got != want {
            violations += 1;
        }
    }
    ensure(violations == 0, || format!("{violations} of 100 sampled images disagree with the pruning replay"))?;
    Ok(format!(
        "8000 images in {:.0}s, mean layers {mean:.3}, {checked_layers} layers replayed with 0 violations",
        elapsed.as_secs_f64()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("annotation recovers exact boxes and rejects full-frame masks", annotation_from_masks),
        ("AP50 matches threshold-enumeration oracle", ap_matches_enumeration_oracle),
        ("pooled AP differs from the weighted mean of subset APs", subset_ap_is_not_additive),
        ("FP_N equals the hand count at confidence 0.10", fp_n_matches_hand_count),
        ("confusion matrix matches hand-computed cells", confusion_matrix_hand_computed),
        ("pipeline output is byte-identical across thread counts", pipeline_is_deterministic),
        ("full-size synthesis: time, object count, pruning replay", paper_scale_synthesis),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
