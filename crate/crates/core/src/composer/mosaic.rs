use rand::Rng;

use crate::error::{Error, Result};
use crate::mask::PixelRect;
use crate::raster::{ColorMode, Raster};
use crate::rng::rng_from_seed;

/// Grid cells in row-major order; cell `k` spans `[floor(k W / n), floor((k+1) W / n))`
/// along each axis, so the cells partition the canvas.
pub fn mosaic_cells(width: u32, height: u32, cols: u32, rows: u32) -> Vec<PixelRect> {
    let edge = |k: u32, size: u32, n: u32| (k as u64 * size as u64 / n as u64) as u32;
    let mut out = Vec::with_capacity((cols * rows) as usize);
    for r in 0..rows {
        for c in 0..cols {
            out.push(PixelRect {
                x0: edge(c, width, cols),
                y0: edge(r, height, rows),
                x1: edge(c + 1, width, cols),
                y1: edge(r + 1, height, rows),
            });
        }
    }
    out
}

/// Fills each grid cell with a random crop of a random tile, resized to the
/// cell. Per cell the draws are: tile index, crop scale in `[0.5, 1]`, crop
/// x, crop y. Crops keep the cell's aspect ratio.
pub fn mosaic_background(tiles: &[Raster], width: u32, height: u32, grid: (u32, u32), seed: u64) -> Result<Raster> {
    if tiles.is_empty() {
        return Err(Error::EmptyPool("mosaic tile"));
    }
    let (cols, rows) = grid;
    if cols == 0 || rows == 0 || cols > width || rows > height {
        return Err(Error::Config(format!("mosaic grid {cols}x{rows} does not fit {width}x{height}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut canvas = Raster::filled(width, height, ColorMode::Rgb, 0);
    for cell in mosaic_cells(width, height, cols, rows) {
        let tile = &tiles[rng.random_range(0..tiles.len())];
        let s: f64 = rng.random_range(0.5..=1.0);
        let (tw, th) = (tile.width() as f64, tile.height() as f64);
        let aspect = cell.width() as f64 / cell.height() as f64;
        let (mw, mh) = if tw / th > aspect { (th * aspect, th) } else { (tw, tw / aspect) };
        let cw = ((mw * s).round() as u32).clamp(1, tile.width());
        let ch = ((mh * s).round() as u32).clamp(1, tile.height());
        let x0 = rng.random_range(0..=tile.width() - cw);
        let y0 = rng.random_range(0..=tile.height() - ch);
        let patch = tile
            .crop(x0, y0, cw, ch)
            .to_mode(ColorMode::Rgb)
            .resize(cell.width(), cell.height());
        for y in 0..cell.height() {
            let start = ((cell.y0 + y) * width + cell.x0) as usize * 3;
            let row = &patch.data()[(y * cell.width()) as usize * 3..((y + 1) * cell.width()) as usize * 3];
            canvas.data_mut()[start..start + row.len()].copy_from_slice(row);
        }
    }
    Ok(canvas)
}
