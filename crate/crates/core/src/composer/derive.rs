use crate::dataset::AnnotatedObject;
use crate::error::Result;
use crate::geometry::BoundingBox;
use crate::raster::Raster;
use crate::transform::{clip_polygon, polygon_area, polygon_extent, warp_raster, Affine};

/// Share of a mapped box's area that stays inside a `width x height` frame.
pub fn in_frame_ratio(quad: &[(f64, f64)], width: u32, height: u32) -> f64 {
    let total = polygon_area(quad);
    if total <= 0.0 {
        return 0.0;
    }
    (polygon_area(&clip_polygon(quad, width as f64, height as f64)) / total).min(1.0)
}

/// Rotates (clockwise, degrees) and scales an annotated image about its
/// centre onto a canvas of the same size; uncovered pixels get `fill`.
///
/// Each box's corners go through the same map. The new box is their
/// axis-aligned hull clipped to the frame, and the visible fraction is
/// scaled by the share of the mapped box left inside the frame. Objects
/// falling below `prune_visible_min` are dropped.
pub fn derive_rotscale(
    img: &Raster,
    objects: &[AnnotatedObject],
    rotation_deg: f64,
    scale: f64,
    fill: u8,
    prune_visible_min: f64,
) -> Result<(Raster, Vec<AnnotatedObject>)> {
    assert!(scale > 0.0, "scale must be positive");
    let (w, h) = img.dimensions();
    let centre = (w as f64 / 2.0, h as f64 / 2.0);
    let f = Affine::rot_scale(centre, centre, rotation_deg, scale);
    let out = warp_raster(img, &f, w, h, fill);
    let mut kept = Vec::with_capacity(objects.len());
    for o in objects {
        let quad = f.map_box(&o.bbox);
        let visible = o.visible_fraction * in_frame_ratio(&quad, w, h);
        if visible < prune_visible_min {
            continue;
        }
        let (x0, y0, x1, y1) = polygon_extent(&quad);
        let Some(bbox) = BoundingBox::from_corners(x0, y0, x1, y1).ok().and_then(|b| b.clip(w, h)) else {
            continue;
        };
        kept.push(AnnotatedObject::new(o.category, bbox, visible, o.source)?);
    }
    Ok((out, kept))
}
