//! Rotation/scale affine maps and nearest-neighbour warping.
//!
//! Positive angles rotate clockwise as displayed (y axis pointing down).
//! Pixels are sampled at their centres, so quarter turns and the identity
//! are exact permutations of the pixel grid.

use crate::geometry::BoundingBox;
use crate::mask::BinaryMask;
use crate::raster::Raster;

/// `(sin, cos)` of an angle in degrees, exact at multiples of 90.
pub fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let r = deg.rem_euclid(360.0);
    if r == 0.0 {
        (0.0, 1.0)
    } else if r == 90.0 {
        (1.0, 0.0)
    } else if r == 180.0 {
        (0.0, -1.0)
    } else if r == 270.0 {
        (-1.0, 0.0)
    } else {
        deg.to_radians().sin_cos()
    }
}

/// `X = a x + b y + tx`, `Y = c x + d y + ty`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Affine {
    /// Rotates by `deg` and scales by `scale` about `src_center`, which is
    /// mapped onto `dst_center`.
    pub fn rot_scale(src_center: (f64, f64), dst_center: (f64, f64), deg: f64, scale: f64) -> Affine {
        let (s, c) = sin_cos_deg(deg);
        let (a, b, cc, d) = (scale * c, -scale * s, scale * s, scale * c);
        Affine {
            a,
            b,
            c: cc,
            d,
            tx: dst_center.0 - (a * src_center.0 + b * src_center.1),
            ty: dst_center.1 - (cc * src_center.0 + d * src_center.1),
        }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.a * x + self.b * y + self.tx, self.c * x + self.d * y + self.ty)
    }

    pub fn determinant(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn inverse(&self) -> Affine {
        let det = self.determinant();
        let (a, b, c, d) = (self.d / det, -self.b / det, -self.c / det, self.a / det);
        Affine {
            a,
            b,
            c,
            d,
            tx: -(a * self.tx + b * self.ty),
            ty: -(c * self.tx + d * self.ty),
        }
    }

    /// Image of the box's four corners, clockwise from top-left.
    pub fn map_box(&self, b: &BoundingBox) -> [(f64, f64); 4] {
        [
            self.apply(b.x(), b.y()),
            self.apply(b.right(), b.y()),
            self.apply(b.right(), b.bottom()),
            self.apply(b.x(), b.bottom()),
        ]
    }
}

/// Axis-aligned extent of a polygon: `(x0, y0, x1, y1)`.
pub fn polygon_extent(points: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    points.iter().fold(
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        |(x0, y0, x1, y1), &(x, y)| (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
    )
}

/// Shoelace area (absolute).
pub fn polygon_area(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let (x0, y0) = points[i];
        let (x1, y1) = points[(i + 1) % n];
        s += x0 * y1 - x1 * y0;
    }
    (s / 2.0).abs()
}

/// Sutherland-Hodgman clip of a convex polygon to `[0, w] x [0, h]`.
pub fn clip_polygon(points: &[(f64, f64)], w: f64, h: f64) -> Vec<(f64, f64)> {
    type Edge = (fn((f64, f64), f64) -> bool, fn((f64, f64), (f64, f64), f64) -> (f64, f64), f64);
    fn lerp_x(p: (f64, f64), q: (f64, f64), x: f64) -> (f64, f64) {
        let t = (x - p.0) / (q.0 - p.0);
        (x, p.1 + t * (q.1 - p.1))
    }
    fn lerp_y(p: (f64, f64), q: (f64, f64), y: f64) -> (f64, f64) {
        let t = (y - p.1) / (q.1 - p.1);
        (p.0 + t * (q.0 - p.0), y)
    }
    let edges: [Edge; 4] = [
        (|p, v| p.0 >= v, lerp_x, 0.0),
        (|p, v| p.0 <= v, lerp_x, w),
        (|p, v| p.1 >= v, lerp_y, 0.0),
        (|p, v| p.1 <= v, lerp_y, h),
    ];
    let mut poly = points.to_vec();
    for (inside, cut, v) in edges {
        if poly.is_empty() {
            break;
        }
        let input = std::mem::take(&mut poly);
        for i in 0..input.len() {
            let cur = input[i];
            let prev = input[(i + input.len() - 1) % input.len()];
            match (inside(cur, v), inside(prev, v)) {
                (true, true) => poly.push(cur),
                (true, false) => {
                    poly.push(cut(prev, cur, v));
                    poly.push(cur);
                }
                (false, true) => poly.push(cut(prev, cur, v)),
                (false, false) => {}
            }
        }
    }
    poly
}

#[inline]
fn source_pixel(inv: &Affine, x: u32, y: u32, w: u32, h: u32) -> Option<(u32, u32)> {
    let (sx, sy) = inv.apply(x as f64 + 0.5, y as f64 + 0.5);
    let (fx, fy) = (sx.floor(), sy.floor());
    if fx >= 0.0 && fy >= 0.0 && fx < w as f64 && fy < h as f64 {
        Some((fx as u32, fy as u32))
    } else {
        None
    }
}

/// Nearest-neighbour warp onto a `width x height` canvas; pixels whose
/// source falls outside `src` take `fill`.
pub fn warp_raster(src: &Raster, forward: &Affine, width: u32, height: u32, fill: u8) -> Raster {
    let inv = forward.inverse();
    let mut out = Raster::filled(width, height, src.mode(), fill);
    for y in 0..height {
        for x in 0..width {
            if let Some((sx, sy)) = source_pixel(&inv, x, y, src.width(), src.height()) {
                out.pixel_mut(x, y).copy_from_slice(src.pixel(sx, sy));
            }
        }
    }
    out
}

pub fn warp_mask(src: &BinaryMask, forward: &Affine, width: u32, height: u32) -> BinaryMask {
    let inv = forward.inverse();
    let mut out = BinaryMask::new(width, height);
    for y in 0..height {
        for x in 0..width {
            if let Some((sx, sy)) = source_pixel(&inv, x, y, src.width(), src.height()) {
                if src.get(sx, sy) {
                    out.set(x, y, true);
                }
            }
        }
    }
    out
}
