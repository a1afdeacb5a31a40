//! Per-pixel binary object masks and 4-connected component labelling.

use std::path::Path;

use image::GrayImage;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Row-major boolean occupancy grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

/// Integer pixel extent of a mask, inclusive of `min` and exclusive of `max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn to_bbox(&self) -> BoundingBox {
        BoundingBox::new(
            self.x0 as f64,
            self.y0 as f64,
            self.width() as f64,
            self.height() as f64,
        )
        .expect("pixel rect is never empty")
    }
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::Dataset(format!(
                "mask bit count {} does not match {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Mask with an axis-aligned filled rectangle (clipped to the grid).
    pub fn from_rect(width: u32, height: u32, x: u32, y: u32, w: u32, h: u32) -> Self {
        let mut m = Self::new(width, height);
        for yy in y..(y + h).min(height) {
            for xx in x..(x + w).min(width) {
                m.set(xx, yy, true);
            }
        }
        m
    }

    /// Any nonzero byte counts as foreground.
    pub fn from_bytes(width: u32, height: u32, bytes: &[u8]) -> Result<Self> {
        Self::from_bits(width, height, bytes.iter().map(|&b| b != 0).collect())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let idx = y as usize * self.width as usize + x as usize;
        self.bits[idx] = value;
    }

    pub fn pixel_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Integer extent of the foreground, `None` for an empty mask.
    pub fn extent(&self) -> Option<PixelRect> {
        let w = self.width as usize;
        let mut rect: Option<PixelRect> = None;
        for (i, _) in self.bits.iter().enumerate().filter(|(_, &b)| b) {
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            rect = Some(match rect {
                None => PixelRect {
                    x0: x,
                    y0: y,
                    x1: x + 1,
                    y1: y + 1,
                },
                Some(r) => PixelRect {
                    x0: r.x0.min(x),
                    y0: r.y0.min(y),
                    x1: r.x1.max(x + 1),
                    y1: r.y1.max(y + 1),
                },
            });
        }
        rect
    }

    /// Minimal box containing every foreground pixel.
    pub fn tight_bbox(&self) -> Result<BoundingBox> {
        self.extent().map(|r| r.to_bbox()).ok_or(Error::EmptyMask)
    }

    /// Sub-mask covering `rect`.
    pub fn crop(&self, rect: PixelRect) -> BinaryMask {
        let mut out = BinaryMask::new(rect.width(), rect.height());
        for y in 0..rect.height() {
            for x in 0..rect.width() {
                out.set(x, y, self.get(rect.x0 + x, rect.y0 + y));
            }
        }
        out
    }

    /// Nearest-neighbour resample to `width x height`.
    pub fn resize_nearest(&self, width: u32, height: u32) -> BinaryMask {
        let mut out = BinaryMask::new(width, height);
        if self.width == 0 || self.height == 0 {
            return out;
        }
        for y in 0..height {
            let sy = ((y as u64 * self.height as u64) / height as u64) as u32;
            for x in 0..width {
                let sx = ((x as u64 * self.width as u64) / width as u64) as u32;
                out.set(x, y, self.get(sx, sy));
            }
        }
        out
    }

    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            image::Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }

    /// Loads a single-channel PNG; nonzero pixels are foreground.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .into_luma8();
        let (w, h) = img.dimensions();
        Self::from_bytes(w, h, img.as_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_gray_image()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }
}

/// Component labels for a boolean grid under 4-connectivity.
///
/// `labels[i]` is `0` for pixels not selected and `1..=count` otherwise;
/// labels are assigned in raster order of each component's first pixel.
#[derive(Debug, Clone)]
pub struct Components {
    pub labels: Vec<u32>,
    pub areas: Vec<usize>,
    /// Whether the component touches the grid border, per label (index `label - 1`).
    pub touches_border: Vec<bool>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.areas.len()
    }
}

/// Labels connected regions of pixels equal to `value` (4-connectivity).
pub fn label_components(mask: &BinaryMask, value: bool) -> Components {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut labels = vec![0u32; w * h];
    let mut areas = Vec::new();
    let mut touches_border = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if mask.bits[start] != value || labels[start] != 0 {
            continue;
        }
        let label = areas.len() as u32 + 1;
        let mut area = 0usize;
        let mut border = false;
        labels[start] = label;
        stack.push(start);
        while let Some(i) = stack.pop() {
            area += 1;
            let (x, y) = (i % w, i / w);
            if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                border = true;
            }
            let mut visit = |j: usize| {
                if mask.bits[j] == value && labels[j] == 0 {
                    labels[j] = label;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        areas.push(area);
        touches_border.push(border);
    }
    Components {
        labels,
        areas,
        touches_border,
    }
}

/// Splits a mask into one mask per 4-connected foreground component.
pub fn split_components(mask: &BinaryMask) -> Vec<BinaryMask> {
    let comps = label_components(mask, true);
    let mut out = vec![BinaryMask::new(mask.width, mask.height); comps.count()];
    for (i, &l) in comps.labels.iter().enumerate() {
        if l > 0 {
            out[l as usize - 1].bits[i] = true;
        }
    }
    out
}
