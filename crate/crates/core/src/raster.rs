//! 8-bit raster images, stored single-channel (gray) or interleaved RGB.

use std::path::Path;

use image::imageops::FilterType;
use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ColorMode {
    #[default]
    Rgb,
    Gray,
}

impl ColorMode {
    pub fn channels(self) -> usize {
        match self {
            ColorMode::Rgb => 3,
            ColorMode::Gray => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    mode: ColorMode,
    data: Vec<u8>,
}

/// Integer BT.601 luma: `(299 R + 587 G + 114 B + 500) / 1000`.
#[inline]
pub fn luma(rgb: [u8; 3]) -> u8 {
    ((299 * rgb[0] as u32 + 587 * rgb[1] as u32 + 114 * rgb[2] as u32 + 500) / 1000) as u8
}

impl Raster {
    pub fn filled(width: u32, height: u32, mode: ColorMode, value: u8) -> Self {
        Self {
            width,
            height,
            mode,
            data: vec![value; width as usize * height as usize * mode.channels()],
        }
    }

    pub fn from_raw(width: u32, height: u32, mode: ColorMode, data: Vec<u8>) -> Result<Self> {
        if data.len() != width as usize * height as usize * mode.channels() {
            return Err(Error::Dataset(format!(
                "raster buffer of {} bytes does not match {width}x{height} {mode:?}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            mode,
            data,
        })
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

    pub fn mode(&self) -> ColorMode {
        self.mode
    }

    pub fn channels(&self) -> usize {
        self.mode.channels()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels()
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels()]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [u8] {
        let o = self.offset(x, y);
        let c = self.channels();
        &mut self.data[o..o + c]
    }

    /// Single-channel luma copy; already-gray images are returned unchanged.
    pub fn to_grayscale(&self) -> Raster {
        match self.mode {
            ColorMode::Gray => self.clone(),
            ColorMode::Rgb => Raster {
                width: self.width,
                height: self.height,
                mode: ColorMode::Gray,
                data: self
                    .data
                    .chunks_exact(3)
                    .map(|p| luma([p[0], p[1], p[2]]))
                    .collect(),
            },
        }
    }

    /// Three-channel copy; gray is replicated across channels.
    pub fn to_rgb(&self) -> Raster {
        match self.mode {
            ColorMode::Rgb => self.clone(),
            ColorMode::Gray => Raster {
                width: self.width,
                height: self.height,
                mode: ColorMode::Rgb,
                data: self.data.iter().flat_map(|&v| [v, v, v]).collect(),
            },
        }
    }

    pub fn to_mode(&self, mode: ColorMode) -> Raster {
        match mode {
            ColorMode::Rgb => self.to_rgb(),
            ColorMode::Gray => self.to_grayscale(),
        }
    }

    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> Raster {
        let c = self.channels();
        let mut data = Vec::with_capacity(w as usize * h as usize * c);
        for yy in y..y + h {
            let o = self.offset(x, yy);
            data.extend_from_slice(&self.data[o..o + w as usize * c]);
        }
        Raster {
            width: w,
            height: h,
            mode: self.mode,
            data,
        }
    }

    /// Bilinear (triangle filter) resample.
    pub fn resize(&self, width: u32, height: u32) -> Raster {
        if (width, height) == self.dimensions() {
            return self.clone();
        }
        let data = match self.mode {
            ColorMode::Gray => {
                let img = GrayImage::from_raw(self.width, self.height, self.data.clone())
                    .expect("buffer length checked at construction");
                image::imageops::resize(&img, width, height, FilterType::Triangle).into_raw()
            }
            ColorMode::Rgb => {
                let img = RgbImage::from_raw(self.width, self.height, self.data.clone())
                    .expect("buffer length checked at construction");
                image::imageops::resize(&img, width, height, FilterType::Triangle).into_raw()
            }
        };
        Raster {
            width,
            height,
            mode: self.mode,
            data,
        }
    }

    /// Decodes PNG or JPEG, applying any EXIF orientation.
    pub fn load(path: &Path) -> Result<Raster> {
        use image::ImageDecoder;
        let image_err = |source| Error::Image {
            path: path.to_path_buf(),
            source,
        };
        let mut decoder = image::ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .with_guessed_format()
            .map_err(|e| Error::io(path, e))?
            .into_decoder()
            .map_err(image_err)?;
        let orientation = decoder.orientation().map_err(image_err)?;
        let mut img = image::DynamicImage::from_decoder(decoder).map_err(image_err)?;
        img.apply_orientation(orientation);
        Ok(match img.color() {
            image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8 => {
                let g = img.into_luma8();
                let (w, h) = g.dimensions();
                Raster::from_raw(w, h, ColorMode::Gray, g.into_raw())?
            }
            _ => {
                let g = img.into_rgb8();
                let (w, h) = g.dimensions();
                Raster::from_raw(w, h, ColorMode::Rgb, g.into_raw())?
            }
        })
    }

    /// Encodes by file extension (`png`, `jpg`/`jpeg`).
    pub fn save(&self, path: &Path) -> Result<()> {
        let color = match self.mode {
            ColorMode::Gray => image::ExtendedColorType::L8,
            ColorMode::Rgb => image::ExtendedColorType::Rgb8,
        };
        image::save_buffer(path, &self.data, self.width, self.height, color).map_err(|source| {
            Error::Image {
                path: path.to_path_buf(),
                source,
            }
        })
    }
}

/// Output size whose longest side is `min(max_side, longest side)`,
/// keeping the aspect ratio.
pub fn longest_side_target(width: u32, height: u32, max_side: u32) -> (u32, u32) {
    let longest = width.max(height);
    if longest <= max_side || longest == 0 {
        return (width, height);
    }
    let scale = max_side as f64 / longest as f64;
    let fit = |v: u32| ((v as f64 * scale).round() as u32).clamp(1, max_side);
    if width >= height {
        (max_side, fit(height))
    } else {
        (fit(width), max_side)
    }
}

/// Downscales so the longest side is at most `max_side`; never upscales.
pub fn resize_longest(img: &Raster, max_side: u32) -> Raster {
    let (w, h) = longest_side_target(img.width(), img.height(), max_side.max(1));
    img.resize(w, h)
}
