//! Copy-paste synthesis: object cutouts pasted onto mosaic or negative
//! backgrounds with per-object occlusion tracking.

mod derive;
mod mosaic;
mod plan;
mod render;
mod synth;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use derive::{derive_rotscale, in_frame_ratio};
pub use mosaic::{mosaic_background, mosaic_cells};
pub use plan::{plan_composition, sample_object_count, BackgroundSpec, CompositionPlan, PasteLayer};
pub use render::{place_layer, render, transform_cutout, LayerOutcome, Rendered};
pub use synth::{synthesize_set, ManifestEntry, SynthCounts, SynthImage, SynthManifest, STREAM_BG, STREAM_DERIVE, STREAM_PLAN};

use crate::dataset::Category;
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::raster::{resize_longest, ColorMode, Raster};

/// Objects per image: `min + Binomial(max - min, p)` with `p` chosen so the
/// expectation equals `mean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectCount {
    pub mean: f64,
    pub min: u32,
    pub max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComposerConfig {
    pub objects_per_image: ObjectCount,
    /// Objects with a smaller visible fraction are dropped from annotations.
    pub prune_visible_min: f64,
    pub blur_probability: f64,
    pub clahe_probability: f64,
    pub rotation_deg: [f64; 2],
    pub scale: [f64; 2],
    /// Largest share of a pasted patch's width or height that may hang off
    /// the canvas.
    pub off_canvas_max: f64,
    pub blend: bool,
    pub grayscale: bool,
    pub canvas_width: u32,
    pub canvas_height: u32,
    pub max_side: u32,
    /// Cutout patches are downscaled to this longest side when loaded.
    pub cutout_max_side: u32,
    /// Mosaic grid as `[columns, rows]`.
    pub mosaic_grid: [u32; 2],
    pub derive_rotation_deg: [f64; 2],
    pub derive_scale: [f64; 2],
    /// Value for pixels that fall outside the source after a warp.
    pub fill_value: u8,
}

impl Default for ComposerConfig {
    fn default() -> Self {
        Self {
            objects_per_image: ObjectCount {
                mean: 16.0,
                min: 1,
                max: 31,
            },
            prune_visible_min: 0.10,
            blur_probability: 0.05,
            clahe_probability: 0.05,
            rotation_deg: [-180.0, 180.0],
            scale: [0.5, 1.5],
            off_canvas_max: 0.3,
            blend: false,
            grayscale: false,
            canvas_width: 640,
            canvas_height: 640,
            max_side: 640,
            cutout_max_side: 160,
            mosaic_grid: [2, 2],
            derive_rotation_deg: [-180.0, 180.0],
            derive_scale: [0.75, 1.25],
            fill_value: 114,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], positive: bool) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) || (positive && r[0] <= 0.0) {
        return Err(Error::Config(format!("{name} must be an ordered finite range{}", if positive { " above 0" } else { "" })));
    }
    Ok(())
}

impl ComposerConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.objects_per_image;
        if c.min > c.max || !(c.min as f64 <= c.mean && c.mean <= c.max as f64) {
            return Err(Error::Config(format!(
                "objects_per_image needs min <= mean <= max, got {} / {} / {}",
                c.min, c.mean, c.max
            )));
        }
        if !(self.prune_visible_min > 0.0 && self.prune_visible_min < 1.0) {
            return Err(Error::Config("prune_visible_min must lie in (0, 1)".into()));
        }
        for (name, p) in [("blur_probability", self.blur_probability), ("clahe_probability", self.clahe_probability)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        check_range("rotation_deg", self.rotation_deg, false)?;
        check_range("scale", self.scale, true)?;
        check_range("derive_rotation_deg", self.derive_rotation_deg, false)?;
        check_range("derive_scale", self.derive_scale, true)?;
        if !(0.0..1.0).contains(&self.off_canvas_max) {
            return Err(Error::Config("off_canvas_max must lie in [0, 1)".into()));
        }
        if self.canvas_width == 0 || self.canvas_height == 0 || self.max_side == 0 || self.cutout_max_side == 0 {
            return Err(Error::Config("canvas and side limits must be positive".into()));
        }
        let [cols, rows] = self.mosaic_grid;
        if cols == 0 || rows == 0 || cols > self.canvas_width || rows > self.canvas_height {
            return Err(Error::Config("mosaic_grid must be at least 1x1 and fit the canvas".into()));
        }
        Ok(())
    }
}

/// One object's image patch and its pixel mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Cutout {
    pub category: u32,
    pub image: Raster,
    pub mask: BinaryMask,
}

impl Cutout {
    pub fn new(category: u32, image: Raster, mask: BinaryMask) -> Result<Self> {
        if image.dimensions() != mask.dimensions() {
            return Err(Error::DimensionMismatch {
                expected: image.dimensions(),
                actual: mask.dimensions(),
            });
        }
        if mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        Ok(Self { category, image, mask })
    }

    /// Crops to the mask's extent and downscales so the longest side is at
    /// most `max_side`.
    pub fn trimmed(category: u32, image: &Raster, mask: &BinaryMask, max_side: u32) -> Result<Self> {
        if image.dimensions() != mask.dimensions() {
            return Err(Error::DimensionMismatch {
                expected: image.dimensions(),
                actual: mask.dimensions(),
            });
        }
        let r = mask.extent().ok_or(Error::EmptyMask)?;
        let img = image.crop(r.x0, r.y0, r.width(), r.height()).to_mode(ColorMode::Rgb);
        let m = mask.crop(r);
        let small = resize_longest(&img, max_side);
        let small_mask = m.resize_nearest(small.width(), small.height());
        if small_mask.is_empty() {
            return Cutout::new(category, img, m);
        }
        Cutout::new(category, small, small_mask)
    }
}

/// Everything the composer draws from.
#[derive(Debug, Clone, Default)]
pub struct Pools {
    pub categories: Vec<Category>,
    pub cutouts: Vec<Cutout>,
    /// Negative backgrounds, already fitted to the canvas.
    pub negatives: Vec<Raster>,
    /// Source images for mosaic tiles.
    pub tiles: Vec<Raster>,
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

/// Image files in `dir` (not masks), sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let ext = path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase());
        if path.is_file() && !name.contains(".mask.") && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Finds `<stem>.<ext>` in `dir` for any supported image extension.
pub fn find_image(dir: &Path, stem: &str) -> Option<PathBuf> {
    IMAGE_EXTENSIONS
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    stem: String,
    category: String,
}

/// Categories plus `(stem, category id)` entries.
pub type CategoryManifest = (Vec<Category>, Vec<(String, u32)>);

/// Reads a `stem,category` CSV. Categories get ids `1..` in name order.
pub fn read_category_manifest(path: &Path) -> Result<CategoryManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let rows: Vec<ManifestRow> = reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let names: BTreeSet<&str> = rows.iter().map(|r| r.category.as_str()).collect();
    let categories: Vec<Category> = names
        .iter()
        .enumerate()
        .map(|(i, n)| Category {
            id: i as u32 + 1,
            name: n.to_string(),
        })
        .collect();
    let entries = rows
        .iter()
        .map(|r| {
            let id = categories.iter().find(|c| c.name == r.category).map(|c| c.id).unwrap_or_default();
            (r.stem.clone(), id)
        })
        .collect();
    Ok((categories, entries))
}

/// Loads `<stem>.<ext>` + `<stem>.mask.png` pairs listed in `manifest`.
pub fn load_cutouts(dir: &Path, manifest: &Path, max_side: u32) -> Result<(Vec<Category>, Vec<Cutout>)> {
    let (categories, entries) = read_category_manifest(manifest)?;
    let mut cutouts = Vec::with_capacity(entries.len());
    for (stem, category) in entries {
        let img_path = find_image(dir, &stem).ok_or_else(|| {
            Error::io(dir.join(&stem), std::io::Error::new(std::io::ErrorKind::NotFound, "no image for stem"))
        })?;
        let image = Raster::load(&img_path)?;
        let mask = BinaryMask::load_png(&dir.join(format!("{stem}.mask.png")))?;
        cutouts.push(Cutout::trimmed(category, &image, &mask, max_side)?);
    }
    Ok((categories, cutouts))
}

/// Scales to cover `width x height`, then centre-crops.
pub fn fit_cover(img: &Raster, width: u32, height: u32) -> Raster {
    let (w, h) = img.dimensions();
    let s = (width as f64 / w as f64).max(height as f64 / h as f64);
    let nw = ((w as f64 * s).ceil() as u32).max(width);
    let nh = ((h as f64 * s).ceil() as u32).max(height);
    img.resize(nw, nh)
        .crop((nw - width) / 2, (nh - height) / 2, width, height)
        .to_mode(ColorMode::Rgb)
}

pub fn load_negatives(dir: &Path, width: u32, height: u32) -> Result<Vec<Raster>> {
    list_images(dir)?
        .iter()
        .map(|p| Raster::load(p).map(|img| fit_cover(&img, width, height)))
        .collect()
}

/// Tiles keep their aspect ratio, downscaled to at most `max_side`.
pub fn load_tiles(dir: &Path, max_side: u32) -> Result<Vec<Raster>> {
    list_images(dir)?
        .iter()
        .map(|p| Raster::load(p).map(|img| resize_longest(&img, max_side).to_mode(ColorMode::Rgb)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ComposerConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = ComposerConfig::default();
        c.objects_per_image.mean = 40.0;
        assert!(c.validate().is_err());
        let mut c = ComposerConfig::default();
        c.prune_visible_min = 1.0;
        assert!(c.validate().is_err());
        let mut c = ComposerConfig::default();
        c.scale = [0.0, 1.0];
        assert!(c.validate().is_err());
    }

    #[test]
    fn trimmed_cutout_crops_to_mask() {
        let img = Raster::filled(50, 40, ColorMode::Gray, 9);
        let mask = BinaryMask::from_rect(50, 40, 10, 5, 20, 8);
        let c = Cutout::trimmed(1, &img, &mask, 160).unwrap();
        assert_eq!(c.image.dimensions(), (20, 8));
        assert_eq!(c.mask.pixel_count(), 160);
        assert_eq!(c.image.mode(), ColorMode::Rgb);
        let small = Cutout::trimmed(1, &img, &mask, 10).unwrap();
        assert_eq!(small.image.dimensions(), (10, 4));
    }

    #[test]
    fn cover_fit_fills_canvas() {
        let img = Raster::filled(100, 50, ColorMode::Rgb, 3);
        let out = fit_cover(&img, 64, 64);
        assert_eq!(out.dimensions(), (64, 64));
    }
}
