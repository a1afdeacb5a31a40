//! Pixel filters shared by the composer and the online augmentations.
//!
//! Borders replicate the edge pixel. Every filter works per channel except
//! CLAHE, which equalizes luma and shifts all channels by the luma change.

use crate::raster::{luma, ColorMode, Raster};

fn check_kernel(k: u32) {
    assert!(k % 2 == 1, "kernel size must be odd, got {k}");
}

/// Separable convolution with a symmetric 1-D kernel, rounding to nearest.
fn separable(img: &Raster, kernel: &[f64]) -> Raster {
    let (w, h) = img.dimensions();
    let ch = img.channels();
    let r = (kernel.len() / 2) as i64;
    let src = img.data();
    let mut tmp = vec![0f64; src.len()];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, wgt) in kernel.iter().enumerate() {
                    let sx = (x + k as i64 - r).clamp(0, w as i64 - 1);
                    acc += wgt * src[((y * w as i64 + sx) as usize) * ch + c] as f64;
                }
                tmp[((y * w as i64 + x) as usize) * ch + c] = acc;
            }
        }
    }
    let mut out = img.clone();
    let dst = out.data_mut();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, wgt) in kernel.iter().enumerate() {
                    let sy = (y + k as i64 - r).clamp(0, h as i64 - 1);
                    acc += wgt * tmp[((sy * w as i64 + x) as usize) * ch + c];
                }
                dst[((y * w as i64 + x) as usize) * ch + c] = acc.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

/// Box blur with an odd `k x k` window.
pub fn box_blur(img: &Raster, k: u32) -> Raster {
    check_kernel(k);
    separable(img, &vec![1.0 / k as f64; k as usize])
}

/// Gaussian blur with an odd kernel; sigma follows the usual
/// `0.3 * ((k - 1) / 2 - 1) + 0.8` rule.
pub fn gaussian_blur(img: &Raster, k: u32) -> Raster {
    check_kernel(k);
    let sigma = 0.3 * ((k as f64 - 1.0) * 0.5 - 1.0) + 0.8;
    let r = (k / 2) as i64;
    let raw: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = raw.iter().sum();
    separable(img, &raw.iter().map(|v| v / sum).collect::<Vec<_>>())
}

/// Median over an odd `k x k` window, per channel.
pub fn median_blur(img: &Raster, k: u32) -> Raster {
    check_kernel(k);
    let (w, h) = img.dimensions();
    let ch = img.channels();
    let r = (k / 2) as i64;
    let src = img.data();
    let mut out = img.clone();
    let dst = out.data_mut();
    let mut window = Vec::with_capacity((k * k) as usize);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            for c in 0..ch {
                window.clear();
                for dy in -r..=r {
                    let sy = (y + dy).clamp(0, h as i64 - 1);
                    for dx in -r..=r {
                        let sx = (x + dx).clamp(0, w as i64 - 1);
                        window.push(src[((sy * w as i64 + sx) as usize) * ch + c]);
                    }
                }
                let mid = window.len() / 2;
                dst[((y * w as i64 + x) as usize) * ch + c] = *window.select_nth_unstable(mid).1;
            }
        }
    }
    out
}

/// Contrast-limited adaptive histogram equalization on a `tiles x tiles`
/// grid. Tile mappings are interpolated bilinearly between tile centres.
pub fn clahe(img: &Raster, clip_limit: f64, tiles: u32) -> Raster {
    assert!(tiles >= 1 && clip_limit > 0.0);
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return img.clone();
    }
    let lum: Vec<u8> = match img.mode() {
        ColorMode::Gray => img.data().to_vec(),
        ColorMode::Rgb => img.data().chunks_exact(3).map(|p| luma([p[0], p[1], p[2]])).collect(),
    };
    let tile_w = w.div_ceil(tiles.min(w));
    let tile_h = h.div_ceil(tiles.min(h));
    // rounding the tile size up can leave fewer, fully populated tiles
    let (tx, ty) = (w.div_ceil(tile_w), h.div_ceil(tile_h));
    let bounds = |i: u32, size: u32, n: u32| (i * size, ((i + 1) * size).min(n));

    let mut luts = vec![[0u8; 256]; (tx * ty) as usize];
    for j in 0..ty {
        let (y0, y1) = bounds(j, tile_h, h);
        for i in 0..tx {
            let (x0, x1) = bounds(i, tile_w, w);
            let mut hist = [0u32; 256];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[lum[(y * w + x) as usize] as usize] += 1;
                }
            }
            let n = ((x1 - x0) * (y1 - y0)).max(1);
            let limit = ((clip_limit * n as f64 / 256.0) as u32).max(1);
            let mut excess = 0;
            for b in hist.iter_mut() {
                if *b > limit {
                    excess += *b - limit;
                    *b = limit;
                }
            }
            let (share, rest) = (excess / 256, excess % 256);
            for (v, b) in hist.iter_mut().enumerate() {
                *b += share + u32::from((v as u32) < rest);
            }
            let lut = &mut luts[(j * tx + i) as usize];
            let mut cdf = 0u64;
            for v in 0..256 {
                cdf += hist[v] as u64;
                lut[v] = ((cdf * 255 + n as u64 / 2) / n as u64).min(255) as u8;
            }
        }
    }

    // position of a pixel centre in tile-centre coordinates
    let coord = |p: u32, size: u32, n: u32| {
        let t = (p as f64 + 0.5) / size as f64 - 0.5;
        let t = t.clamp(0.0, (n - 1) as f64);
        let i0 = t.floor() as u32;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, t - i0 as f64)
    };
    let mut out = img.clone();
    let ch = img.channels();
    let dst = out.data_mut();
    for y in 0..h {
        let (j0, j1, fy) = coord(y, tile_h, ty);
        for x in 0..w {
            let (i0, i1, fx) = coord(x, tile_w, tx);
            let v = lum[(y * w + x) as usize] as usize;
            let at = |i: u32, j: u32| luts[(j * tx + i) as usize][v] as f64;
            let top = at(i0, j0) * (1.0 - fx) + at(i1, j0) * fx;
            let bottom = at(i0, j1) * (1.0 - fx) + at(i1, j1) * fx;
            let mapped = (top * (1.0 - fy) + bottom * fy).round();
            let delta = mapped - v as f64;
            let base = (y * w + x) as usize * ch;
            for c in 0..ch {
                dst[base + c] = (dst[base + c] as f64 + delta).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}
