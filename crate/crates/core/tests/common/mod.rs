//! Generated fixtures: single-object photos with known masks, and
//! object-free background images.

#![allow(dead_code)]

use std::fs;
use std::path::Path;

use cpsynth::mask::PixelRect;
use cpsynth::rng::{rng_from_seed, DetRng};
use cpsynth::{BinaryMask, ColorMode, Raster};
use rand::Rng;

pub const CATEGORIES: [&str; 3] = ["brezel", "croissant", "semmel"];

/// Smooth gradient plus mild noise.
pub fn textured(w: u32, h: u32, rng: &mut DetRng) -> Raster {
    let base: [f64; 3] = [rng.random_range(40.0..200.0), rng.random_range(40.0..200.0), rng.random_range(40.0..200.0)];
    let slope: [f64; 3] = [rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)];
    let mut data = Vec::with_capacity((w * h * 3) as usize);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = base[c] + slope[c] * (x as f64 - y as f64) + rng.random_range(-6.0..6.0);
                data.push(v.clamp(0.0, 255.0) as u8);
            }
        }
    }
    Raster::from_raw(w, h, ColorMode::Rgb, data).unwrap()
}

/// Filled ellipse strictly inside the frame; returns the mask and its extent.
pub fn ellipse_mask(w: u32, h: u32, rng: &mut DetRng) -> (BinaryMask, PixelRect) {
    loop {
        let rx = rng.random_range(w as f64 * 0.12..w as f64 * 0.35);
        let ry = rng.random_range(h as f64 * 0.12..h as f64 * 0.35);
        let cx = rng.random_range(rx + 2.0..w as f64 - rx - 2.0);
        let cy = rng.random_range(ry + 2.0..h as f64 - ry - 2.0);
        let mut m = BinaryMask::new(w, h);
        for y in 0..h {
            for x in 0..w {
                let dx = (x as f64 + 0.5 - cx) / rx;
                let dy = (y as f64 + 0.5 - cy) / ry;
                if dx * dx + dy * dy <= 1.0 {
                    m.set(x, y, true);
                }
            }
        }
        if let Some(r) = m.extent() {
            return (m, r);
        }
    }
}

/// Photo of one object on a textured backdrop. The object has its own
/// flat-ish colour far from the backdrop.
pub fn object_photo(w: u32, h: u32, rng: &mut DetRng) -> (Raster, BinaryMask, PixelRect) {
    let mut img = textured(w, h, rng);
    let (mask, rect) = ellipse_mask(w, h, rng);
    let colour = [rng.random_range(0..40u8), rng.random_range(200..=255u8), rng.random_range(0..60u8)];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                let n: i16 = rng.random_range(-5..=5);
                let px = img.pixel_mut(x, y);
                for c in 0..3 {
                    px[c] = (colour[c] as i16 + n).clamp(0, 255) as u8;
                }
            }
        }
    }
    (img, mask, rect)
}

/// Writes `n` photos with `<stem>.mask.png` files and a `stem,category`
/// manifest. Returns the stems with their true boxes.
pub fn write_annotate_inputs(dir: &Path, n: usize, seed: u64) -> Vec<(String, PixelRect)> {
    fs::create_dir_all(dir).unwrap();
    let mut rng = rng_from_seed(seed);
    let mut csv = String::from("stem,category\n");
    let mut out = Vec::new();
    for i in 0..n {
        let (w, h) = (rng.random_range(120..220), rng.random_range(100..200));
        let (img, mask, rect) = object_photo(w, h, &mut rng);
        let stem = format!("obj_{i:03}");
        img.save(&dir.join(format!("{stem}.png"))).unwrap();
        mask.save_png(&dir.join(format!("{stem}.mask.png"))).unwrap();
        csv.push_str(&format!("{stem},{}\n", CATEGORIES[i % CATEGORIES.len()]));
        out.push((stem, rect));
    }
    fs::write(dir.join("manifest.csv"), csv).unwrap();
    out
}

pub fn write_backgrounds(dir: &Path, n: usize, w: u32, h: u32, seed: u64) {
    fs::create_dir_all(dir).unwrap();
    let mut rng = rng_from_seed(seed);
    for i in 0..n {
        textured(w, h, &mut rng).save(&dir.join(format!("bg_{i:03}.png"))).unwrap();
    }
}

/// Full pipeline config for fixture directories under `root`.
pub fn pipeline_config(root: &Path, seed: u64) -> cpsynth::config::RunConfig {
    let mut cfg = cpsynth::config::RunConfig {
        seed,
        ..Default::default()
    };
    cfg.paths.annotate_images = Some(root.join("photos"));
    cfg.paths.annotate_manifest = Some(root.join("photos/manifest.csv"));
    cfg.paths.negatives = Some(root.join("negatives"));
    cfg
}
