//! Seeded online augmentation pipelines over annotated images.
//!
//! Each step flips its own coin and only then draws its parameters. Pixel
//! steps leave annotations untouched; scale and rotate share
//! [`derive_rotscale`] with the composer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::composer::derive_rotscale;
use crate::dataset::AnnotatedObject;
use crate::error::{Error, Result};
use crate::filters::{box_blur, clahe, median_blur};
use crate::mask::PixelRect;
use crate::raster::{ColorMode, Raster};
use crate::rng::{rng_from_seed, DetRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum AugOp {
    /// Box blur with an odd kernel drawn from `kernel`.
    Blur { kernel: [u32; 2] },
    MedianBlur { kernel: [u32; 2] },
    /// Luma replicated into every channel, so the layout is unchanged.
    ToGray,
    Clahe { clip_limit: f64, tiles: u32 },
    CoarseDropout { holes: [u32; 2], area_max: f64, fill: u8 },
    PixelDropout { rate: f64, fill: u8 },
    Scale { range: [f64; 2] },
    Rotate { range_deg: [f64; 2] },
}

impl AugOp {
    pub fn is_spatial(&self) -> bool {
        matches!(self, AugOp::Scale { .. } | AugOp::Rotate { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugStep {
    #[serde(flatten)]
    pub op: AugOp,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugPipeline {
    pub steps: Vec<AugStep>,
    /// Fill for pixels uncovered by spatial steps.
    pub fill_value: u8,
    /// Spatial steps drop objects whose in-frame visible fraction falls below this.
    pub prune_visible_min: f64,
}

const BLUR_KERNEL: [u32; 2] = [3, 7];

impl AugPipeline {
    pub fn new(steps: Vec<AugStep>) -> Self {
        Self {
            steps,
            fill_value: 114,
            prune_visible_min: 0.10,
        }
    }

    /// Blur, MedianBlur, ToGray, CLAHE, each with probability `p`.
    pub fn bl(p: f64) -> Self {
        Self::new(bl_steps(p))
    }

    /// CoarseDropout, PixelDropout, Scale, Rotate with probability `p`,
    /// followed by the BL steps at `trailing_bl`.
    pub fn dropout(p: f64, coarse_area_max: f64, trailing_bl: f64) -> Self {
        let mut steps = vec![
            AugStep {
                op: AugOp::CoarseDropout {
                    holes: [1, 8],
                    area_max: coarse_area_max,
                    fill: 0,
                },
                p,
            },
            AugStep {
                op: AugOp::PixelDropout { rate: 0.01, fill: 0 },
                p,
            },
            AugStep {
                op: AugOp::Scale { range: [0.8, 1.2] },
                p,
            },
            AugStep {
                op: AugOp::Rotate {
                    range_deg: [-15.0, 15.0],
                },
                p,
            },
        ];
        steps.extend(bl_steps(trailing_bl));
        Self::new(steps)
    }

    pub fn validate(&self) -> Result<()> {
        let odd_range = |k: [u32; 2]| k[0] % 2 == 1 && k[1] % 2 == 1 && k[0] <= k[1];
        for (i, s) in self.steps.iter().enumerate() {
            let bad = |msg: &str| Err(Error::Config(format!("augmentation step {i}: {msg}")));
            if !(0.0..=1.0).contains(&s.p) {
                return bad("probability must lie in [0, 1]");
            }
            match &s.op {
                AugOp::Blur { kernel } | AugOp::MedianBlur { kernel } if !odd_range(*kernel) => {
                    return bad("kernel range must be odd and ordered");
                }
                AugOp::Clahe { clip_limit, tiles } if *clip_limit <= 0.0 || *tiles == 0 => {
                    return bad("CLAHE needs a positive clip limit and tile count");
                }
                AugOp::CoarseDropout { holes, area_max, .. } if holes[0] > holes[1] || !(*area_max > 0.0 && *area_max <= 1.0) => {
                    return bad("coarse dropout needs ordered hole counts and area_max in (0, 1]");
                }
                AugOp::PixelDropout { rate, .. } if !(0.0..=1.0).contains(rate) => {
                    return bad("pixel dropout rate must lie in [0, 1]");
                }
                AugOp::Scale { range } if !(range[0] > 0.0 && range[0] <= range[1]) => {
                    return bad("scale range must be positive and ordered");
                }
                AugOp::Rotate { range_deg } if range_deg[0] > range_deg[1] => {
                    return bad("rotation range must be ordered");
                }
                _ => {}
            }
        }
        if !(self.prune_visible_min > 0.0 && self.prune_visible_min < 1.0) {
            return Err(Error::Config("prune_visible_min must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

fn bl_steps(p: f64) -> Vec<AugStep> {
    vec![
        AugStep {
            op: AugOp::Blur { kernel: BLUR_KERNEL },
            p,
        },
        AugStep {
            op: AugOp::MedianBlur { kernel: BLUR_KERNEL },
            p,
        },
        AugStep { op: AugOp::ToGray, p },
        AugStep {
            op: AugOp::Clahe {
                clip_limit: 2.0,
                tiles: 8,
            },
            p,
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Bl,
    Do,
}

/// Pipeline selection for a run: a preset plus overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugConfig {
    pub preset: Preset,
    /// Step probability; 0.01 for BL and 0.04 for DO when unset.
    pub probability: Option<f64>,
    /// Probability of the BL steps that close the DO pipeline.
    pub trailing_bl_probability: f64,
    pub coarse_dropout_area_max: f64,
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Bl,
            probability: None,
            trailing_bl_probability: 0.005,
            coarse_dropout_area_max: 0.10,
        }
    }
}

impl AugConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.coarse_dropout_area_max > 0.0 && self.coarse_dropout_area_max <= 0.10) {
            // larger holes could erase whole objects while their boxes stay
            return Err(Error::Config("coarse_dropout_area_max must lie in (0, 0.10]".into()));
        }
        self.pipeline().validate()
    }

    pub fn pipeline(&self) -> AugPipeline {
        match self.preset {
            Preset::Bl => AugPipeline::bl(self.probability.unwrap_or(0.01)),
            Preset::Do => AugPipeline::dropout(
                self.probability.unwrap_or(0.04),
                self.coarse_dropout_area_max,
                self.trailing_bl_probability,
            ),
        }
    }
}

fn odd_kernel(rng: &mut DetRng, range: [u32; 2]) -> u32 {
    let choices = (range[1] - range[0]) / 2 + 1;
    range[0] + 2 * rng.random_range(0..choices)
}

fn range_f64(rng: &mut DetRng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Rectangles for one coarse dropout draw. With `n` holes each hole gets at
/// most `floor(area_max * W * H) / n` pixels, so their summed area never
/// exceeds the budget.
pub fn coarse_dropout_holes(width: u32, height: u32, area_max: f64, holes: [u32; 2], rng: &mut DetRng) -> Vec<PixelRect> {
    let n = rng.random_range(holes[0]..=holes[1]);
    if n == 0 || width == 0 || height == 0 {
        return Vec::new();
    }
    let budget = ((area_max * width as f64 * height as f64).floor() as u64 / n as u64) as u32;
    if budget == 0 {
        return Vec::new();
    }
    (0..n)
        .map(|_| {
            let w = rng.random_range(1..=width.min(budget));
            let h = rng.random_range(1..=height.min(budget / w));
            let x0 = rng.random_range(0..=width - w);
            let y0 = rng.random_range(0..=height - h);
            PixelRect {
                x0,
                y0,
                x1: x0 + w,
                y1: y0 + h,
            }
        })
        .collect()
}

fn fill_rects(img: &mut Raster, rects: &[PixelRect], fill: u8) {
    for r in rects {
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                img.pixel_mut(x, y).fill(fill);
            }
        }
    }
}

/// Fills `holes` random rectangles (count drawn from the range) with `fill`;
/// their total area is at most `area_max` of the image.
pub fn coarse_dropout(img: &Raster, area_max: f64, holes: [u32; 2], fill: u8, seed: u64) -> Raster {
    let mut rng = rng_from_seed(seed);
    let rects = coarse_dropout_holes(img.width(), img.height(), area_max, holes, &mut rng);
    let mut out = img.clone();
    fill_rects(&mut out, &rects, fill);
    out
}

fn pixel_dropout(img: &mut Raster, rate: f64, fill: u8, rng: &mut DetRng) {
    let ch = img.channels();
    for px in img.data_mut().chunks_exact_mut(ch) {
        if rng.random::<f64>() < rate {
            px.fill(fill);
        }
    }
}

fn to_gray_keep_layout(img: &Raster) -> Raster {
    match img.mode() {
        ColorMode::Gray => img.clone(),
        ColorMode::Rgb => img.to_grayscale().to_rgb(),
    }
}

/// Runs the pipeline, also reporting which steps fired.
pub fn apply_traced(
    pipeline: &AugPipeline,
    img: &Raster,
    objects: &[AnnotatedObject],
    seed: u64,
) -> Result<(Raster, Vec<AnnotatedObject>, Vec<bool>)> {
    let mut rng = rng_from_seed(seed);
    let mut img = img.clone();
    let mut objects = objects.to_vec();
    let mut fired = Vec::with_capacity(pipeline.steps.len());
    for step in &pipeline.steps {
        let hit = rng.random::<f64>() < step.p;
        fired.push(hit);
        if !hit {
            continue;
        }
        match &step.op {
            AugOp::Blur { kernel } => img = box_blur(&img, odd_kernel(&mut rng, *kernel)),
            AugOp::MedianBlur { kernel } => img = median_blur(&img, odd_kernel(&mut rng, *kernel)),
            AugOp::ToGray => img = to_gray_keep_layout(&img),
            AugOp::Clahe { clip_limit, tiles } => img = clahe(&img, *clip_limit, *tiles),
            AugOp::CoarseDropout { holes, area_max, fill } => {
                let rects = coarse_dropout_holes(img.width(), img.height(), *area_max, *holes, &mut rng);
                fill_rects(&mut img, &rects, *fill);
            }
            AugOp::PixelDropout { rate, fill } => pixel_dropout(&mut img, *rate, *fill, &mut rng),
            AugOp::Scale { range } => {
                let s = range_f64(&mut rng, *range);
                (img, objects) = derive_rotscale(&img, &objects, 0.0, s, pipeline.fill_value, pipeline.prune_visible_min)?;
            }
            AugOp::Rotate { range_deg } => {
                let r = range_f64(&mut rng, *range_deg);
                (img, objects) = derive_rotscale(&img, &objects, r, 1.0, pipeline.fill_value, pipeline.prune_visible_min)?;
            }
        }
    }
    Ok((img, objects, fired))
}

/// Applies the pipeline to an annotated image; a pure function of its inputs.
pub fn apply(pipeline: &AugPipeline, img: &Raster, objects: &[AnnotatedObject], seed: u64) -> Result<(Raster, Vec<AnnotatedObject>)> {
    apply_traced(pipeline, img, objects, seed).map(|(i, o, _)| (i, o))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Source;
    use crate::geometry::BoundingBox;

    fn sample() -> (Raster, Vec<AnnotatedObject>) {
        let data = (0..48 * 32 * 3).map(|i| (i * 31 % 256) as u8).collect();
        let img = Raster::from_raw(48, 32, ColorMode::Rgb, data).unwrap();
        let objs = vec![
            AnnotatedObject::new(1, BoundingBox::new(4.0, 4.0, 10.0, 8.0).unwrap(), 0.8, Source::Synthetic).unwrap(),
            AnnotatedObject::new(2, BoundingBox::new(20.0, 10.0, 12.0, 12.0).unwrap(), 1.0, Source::Synthetic).unwrap(),
        ];
        (img, objs)
    }

    fn always(op: AugOp) -> AugPipeline {
        AugPipeline::new(vec![AugStep { op, p: 1.0 }])
    }

    #[test]
    fn zero_probability_is_identity() {
        let (img, objs) = sample();
        for p in [AugPipeline::bl(0.0), AugPipeline::dropout(0.0, 0.1, 0.0)] {
            let (i, o) = apply(&p, &img, &objs, 5).unwrap();
            assert_eq!(i, img);
            assert_eq!(o, objs);
        }
    }

    #[test]
    fn seeded() {
        let (img, objs) = sample();
        let p = AugPipeline::dropout(0.5, 0.1, 0.5);
        assert_eq!(apply(&p, &img, &objs, 11).unwrap(), apply(&p, &img, &objs, 11).unwrap());
    }

    #[test]
    fn pixel_steps_keep_annotations() {
        let (img, objs) = sample();
        let ops = [
            AugOp::Blur { kernel: [3, 7] },
            AugOp::MedianBlur { kernel: [3, 7] },
            AugOp::ToGray,
            AugOp::Clahe { clip_limit: 2.0, tiles: 8 },
            AugOp::CoarseDropout { holes: [1, 8], area_max: 0.1, fill: 0 },
            AugOp::PixelDropout { rate: 0.5, fill: 0 },
        ];
        for op in ops {
            for seed in 0..5 {
                let (i, o) = apply(&always(op.clone()), &img, &objs, seed).unwrap();
                assert_eq!(o, objs);
                assert_eq!(i.dimensions(), img.dimensions());
                assert_eq!(i.mode(), ColorMode::Rgb);
            }
        }
    }

    #[test]
    fn spatial_steps_match_derive() {
        let (img, objs) = sample();
        for seed in 0..10 {
            let (i, o) = apply(&always(AugOp::Rotate { range_deg: [-15.0, 15.0] }), &img, &objs, seed).unwrap();
            let mut rng = rng_from_seed(seed);
            let _coin: f64 = rng.random();
            let r = rng.random_range(-15.0..15.0);
            assert_eq!((i, o), derive_rotscale(&img, &objs, r, 1.0, 114, 0.1).unwrap());

            let (i, o) = apply(&always(AugOp::Scale { range: [0.8, 1.2] }), &img, &objs, seed).unwrap();
            let mut rng = rng_from_seed(seed);
            let _coin: f64 = rng.random();
            let s = rng.random_range(0.8..1.2);
            assert_eq!((i, o), derive_rotscale(&img, &objs, 0.0, s, 114, 0.1).unwrap());
        }
    }

    #[test]
    fn coarse_dropout_budget() {
        let img = Raster::filled(100, 100, ColorMode::Gray, 255);
        for seed in 0..1000 {
            let mut rng = rng_from_seed(seed);
            let holes = coarse_dropout_holes(100, 100, 0.10, [1, 8], &mut rng);
            let area: u32 = holes.iter().map(|r| r.width() * r.height()).sum();
            assert!(area <= 1000, "seed {seed}: {area}");
            let out = coarse_dropout(&img, 0.10, [1, 8], 0, seed);
            assert!(out.data().iter().filter(|&&v| v == 0).count() <= 1000);
        }
        assert_eq!(coarse_dropout(&img, 0.10, [0, 0], 0, 3), img);
    }

    #[test]
    fn to_gray_keeps_channels() {
        let (img, _) = sample();
        let g = to_gray_keep_layout(&img);
        assert_eq!(g.mode(), ColorMode::Rgb);
        assert!(g.data().chunks_exact(3).all(|p| p[0] == p[1] && p[1] == p[2]));
    }

    #[test]
    fn config_presets() {
        let c = AugConfig::default();
        c.validate().unwrap();
        assert_eq!(c.pipeline().steps.len(), 4);
        assert!(c.pipeline().steps.iter().all(|s| s.p == 0.01));
        let d = AugConfig { preset: Preset::Do, ..Default::default() };
        let p = d.pipeline();
        assert_eq!(p.steps.len(), 8);
        assert_eq!(p.steps[0].p, 0.04);
        assert_eq!(p.steps[7].p, 0.005);
        let big = AugConfig { coarse_dropout_area_max: 0.2, ..Default::default() };
        assert!(big.validate().is_err());
    }
}
