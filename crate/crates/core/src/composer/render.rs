use serde::Serialize;

use crate::dataset::{AnnotatedObject, Source};
use crate::error::{Error, Result};
use crate::filters::{clahe, gaussian_blur};
use crate::geometry::BoundingBox;
use crate::mask::BinaryMask;
use crate::raster::{longest_side_target, ColorMode, Raster};
use crate::transform::{polygon_extent, warp_mask, warp_raster, Affine};

use super::mosaic::mosaic_background;
use super::plan::{BackgroundSpec, CompositionPlan, PasteLayer};
use super::{ComposerConfig, Cutout, Pools};

const NO_OWNER: u32 = u32::MAX;
const CLAHE_CLIP: f64 = 2.0;
const CLAHE_TILES: u32 = 8;

/// Rotates and scales a cutout about its centre onto the smallest patch that
/// holds the result.
pub fn transform_cutout(cutout: &Cutout, rotation_deg: f64, scale: f64) -> (Raster, BinaryMask) {
    let (w, h) = cutout.image.dimensions();
    let centre = (w as f64 / 2.0, h as f64 / 2.0);
    let probe = Affine::rot_scale(centre, (0.0, 0.0), rotation_deg, scale);
    let frame = BoundingBox::frame(w, h).expect("cutouts are non-empty");
    let (x0, y0, x1, y1) = polygon_extent(&probe.map_box(&frame));
    // the epsilon absorbs rounding in exact quarter turns
    let ow = ((x1 - x0 - 1e-9).ceil() as u32).max(1);
    let oh = ((y1 - y0 - 1e-9).ceil() as u32).max(1);
    let f = Affine::rot_scale(centre, (ow as f64 / 2.0, oh as f64 / 2.0), rotation_deg, scale);
    (warp_raster(&cutout.image, &f, ow, oh, 0), warp_mask(&cutout.mask, &f, ow, oh))
}

/// Transformed patch with the layer's blur and CLAHE applied.
pub fn place_layer(cutout: &Cutout, layer: &PasteLayer) -> (Raster, BinaryMask) {
    let (mut img, mask) = transform_cutout(cutout, layer.rotation_deg, layer.scale);
    if let Some(k) = layer.blur_kernel {
        img = gaussian_blur(&img, k);
    }
    if layer.clahe {
        img = clahe(&img, CLAHE_CLIP, CLAHE_TILES);
    }
    (img, mask)
}

/// Per-layer occlusion accounting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerOutcome {
    pub z: u32,
    pub category: u32,
    /// Transformed object pixels, on or off the canvas.
    pub total_pixels: usize,
    /// Pixels still owned by this layer in the final image.
    pub visible_pixels: usize,
    pub visible_fraction: f64,
    /// Full transformed extent clipped to the canvas, in canvas pixels.
    pub bbox: Option<BoundingBox>,
    pub kept: bool,
}

#[derive(Debug, Clone)]
pub struct Rendered {
    pub image: Raster,
    /// Retained objects in z order.
    pub objects: Vec<AnnotatedObject>,
    pub layers: Vec<LayerOutcome>,
}

fn background(plan: &CompositionPlan, pools: &Pools, cfg: &ComposerConfig) -> Result<Raster> {
    let (w, h) = (plan.width, plan.height);
    let img = match plan.background {
        BackgroundSpec::Mosaic { seed } => {
            let [cols, rows] = cfg.mosaic_grid;
            mosaic_background(&pools.tiles, w, h, (cols, rows), seed)?
        }
        BackgroundSpec::Negative { index } => {
            let img = pools.negatives.get(index).ok_or(Error::EmptyPool("negative"))?;
            if img.dimensions() == (w, h) {
                img.to_mode(ColorMode::Rgb)
            } else {
                super::fit_cover(img, w, h)
            }
        }
    };
    Ok(img)
}

fn is_edge(mask: &BinaryMask, x: u32, y: u32) -> bool {
    let (w, h) = mask.dimensions();
    x == 0
        || y == 0
        || x + 1 == w
        || y + 1 == h
        || !mask.get(x - 1, y)
        || !mask.get(x + 1, y)
        || !mask.get(x, y - 1)
        || !mask.get(x, y + 1)
}

/// Pastes the plan's layers in z order with hard mask edges (or averaged
/// edges when `cfg.blend`). A layer's visible fraction is the share of its
/// transformed mask pixels that end up owning a canvas pixel; layers below
/// `cfg.prune_visible_min` are left out of the annotations. Retained boxes
/// span the whole transformed object, occluded parts included, clipped to
/// the canvas.
pub fn render(plan: &CompositionPlan, pools: &Pools, cfg: &ComposerConfig) -> Result<Rendered> {
    let (w, h) = (plan.width, plan.height);
    let mut canvas = background(plan, pools, cfg)?;
    let mut owner = vec![NO_OWNER; (w * h) as usize];
    let mut totals = Vec::with_capacity(plan.layers.len());
    let mut extents = Vec::with_capacity(plan.layers.len());

    for (i, layer) in plan.layers.iter().enumerate() {
        let cutout = pools.cutouts.get(layer.cutout).ok_or(Error::EmptyPool("cutout"))?;
        let (patch, mask) = place_layer(cutout, layer);
        totals.push(mask.pixel_count());
        extents.push(mask.extent().and_then(|r| {
            BoundingBox::from_corners(
                (layer.x + r.x0 as i64) as f64,
                (layer.y + r.y0 as i64) as f64,
                (layer.x + r.x1 as i64) as f64,
                (layer.y + r.y1 as i64) as f64,
            )
            .ok()
            .and_then(|b| b.clip(w, h))
        }));
        for py in 0..mask.height() {
            let cy = layer.y + py as i64;
            if cy < 0 || cy >= h as i64 {
                continue;
            }
            for px in 0..mask.width() {
                let cx = layer.x + px as i64;
                if cx < 0 || cx >= w as i64 || !mask.get(px, py) {
                    continue;
                }
                let (cx, cy) = (cx as u32, cy as u32);
                let src = patch.pixel(px, py);
                let dst = canvas.pixel_mut(cx, cy);
                if cfg.blend && is_edge(&mask, px, py) {
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = (*d as u16 + *s as u16).div_ceil(2) as u8;
                    }
                } else {
                    dst.copy_from_slice(src);
                }
                owner[(cy * w + cx) as usize] = i as u32;
            }
        }
    }

    let mut visible = vec![0usize; plan.layers.len()];
    for &o in &owner {
        if o != NO_OWNER {
            visible[o as usize] += 1;
        }
    }

    let (ow, oh) = longest_side_target(w, h, cfg.max_side);
    let (sx, sy) = (ow as f64 / w as f64, oh as f64 / h as f64);
    let mut objects = Vec::new();
    let mut layers = Vec::with_capacity(plan.layers.len());
    for (i, layer) in plan.layers.iter().enumerate() {
        let category = pools.cutouts[layer.cutout].category;
        let visible_fraction = if totals[i] == 0 {
            0.0
        } else {
            visible[i] as f64 / totals[i] as f64
        };
        let kept = visible_fraction >= cfg.prune_visible_min && extents[i].is_some();
        if kept {
            let bbox = extents[i].expect("checked above");
            let bbox = if (ow, oh) == (w, h) { bbox } else { bbox.scaled(sx, sy)? };
            objects.push(AnnotatedObject::new(category, bbox, visible_fraction, Source::Synthetic)?);
        }
        layers.push(LayerOutcome {
            z: layer.z,
            category,
            total_pixels: totals[i],
            visible_pixels: visible[i],
            visible_fraction,
            bbox: extents[i],
            kept,
        });
    }

    if cfg.grayscale {
        canvas = canvas.to_grayscale();
    }
    if (ow, oh) != (w, h) {
        canvas = canvas.resize(ow, oh);
    }
    Ok(Rendered {
        image: canvas,
        objects,
        layers,
    })
}
