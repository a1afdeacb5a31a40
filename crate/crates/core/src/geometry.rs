//! Axis-aligned boxes in absolute pixel coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `(x, y, w, h)` with `(x, y)` the top-left corner.
///
/// Width and height are always strictly positive; zero-area boxes cannot be
/// constructed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundingBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let finite = x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite();
        if !finite || w <= 0.0 || h <= 0.0 {
            return Err(Error::DegenerateBox { x, y, w, h });
        }
        Ok(Self { x, y, w, h })
    }

    /// Box spanning `[x0, x1) x [y0, y1)`.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new(x0, y0, x1 - x0, y1 - y0)
    }

    /// Box covering a whole `width x height` image.
    pub fn frame(width: u32, height: u32) -> Result<Self> {
        Self::new(0.0, 0.0, width as f64, height as f64)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Intersection with `[0, width) x [0, height)`; `None` if nothing remains.
    pub fn clip(&self, width: u32, height: u32) -> Option<BoundingBox> {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.right().min(width as f64);
        let y1 = self.bottom().min(height as f64);
        BoundingBox::from_corners(x0, y0, x1, y1).ok()
    }

    /// Multiplies coordinates per axis and rounds to two decimals.
    pub fn scaled(&self, sx: f64, sy: f64) -> Result<BoundingBox> {
        BoundingBox::new(
            round2(self.x * sx),
            round2(self.y * sy),
            round2(self.w * sx),
            round2(self.h * sy),
        )
    }

    /// Copy with every coordinate rounded to two decimals.
    pub fn rounded(&self) -> Result<BoundingBox> {
        self.scaled(1.0, 1.0)
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [x, y, w, h] = <[f64; 4]>::deserialize(deserializer)?;
        BoundingBox::new(x, y, w, h).map_err(serde::de::Error::custom)
    }
}

/// Intersection over union. Symmetric, in `[0, 1]`, zero for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

pub(crate) fn round2(v: f64) -> f64 {
    let r = (v * 100.0).round() / 100.0;
    // normalise -0.0 so serialisation is stable
    if r == 0.0 {
        0.0
    } else {
        r
    }
}
