use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, DetRng};

use super::render::transform_cutout;
use super::{ComposerConfig, Cutout, ObjectCount};

/// Where the canvas pixels under the pasted objects come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackgroundSpec {
    Mosaic { seed: u64 },
    Negative { index: usize },
}

/// One transformed cutout scheduled for pasting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PasteLayer {
    pub cutout: usize,
    pub rotation_deg: f64,
    pub scale: f64,
    /// Canvas position of the transformed patch's top-left corner.
    pub x: i64,
    pub y: i64,
    /// Gaussian kernel size when blurred.
    pub blur_kernel: Option<u32>,
    pub clahe: bool,
    pub z: u32,
}

/// Full recipe for one synthetic image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionPlan {
    pub width: u32,
    pub height: u32,
    pub background: BackgroundSpec,
    /// Bottom to top.
    pub layers: Vec<PasteLayer>,
    pub seed: u64,
}

pub(crate) const BLUR_KERNELS: [u32; 3] = [3, 5, 7];
const PLACEMENT_TRIES: usize = 8;

/// `min + Binomial(max - min, p)`, drawn as `max - min` Bernoulli trials.
pub fn sample_object_count(c: &ObjectCount, rng: &mut DetRng) -> u32 {
    let n = c.max - c.min;
    if n == 0 {
        return c.min;
    }
    let p = (c.mean - c.min as f64) / n as f64;
    c.min + (0..n).filter(|_| rng.random::<f64>() < p).count() as u32
}

pub(crate) fn uniform(rng: &mut DetRng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        // still consume a draw so the stream layout does not depend on the range
        let _ = rng.random::<f64>();
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Builds a plan from `seed`.
///
/// Draw order: the object count, then per layer: cutout index, rotation,
/// scale, blur coin (plus kernel when it fires), CLAHE coin, then up to
/// eight `(x, y)` position pairs until some mask pixel lands on the canvas.
/// If none does the patch is centred.
pub fn plan_composition(
    cutouts: &[Cutout],
    background: BackgroundSpec,
    cfg: &ComposerConfig,
    seed: u64,
) -> Result<CompositionPlan> {
    if cutouts.is_empty() {
        return Err(Error::EmptyPool("cutout"));
    }
    let (cw, ch) = (cfg.canvas_width as i64, cfg.canvas_height as i64);
    let mut rng = rng_from_seed(seed);
    let n = sample_object_count(&cfg.objects_per_image, &mut rng);
    let mut layers = Vec::with_capacity(n as usize);
    for z in 0..n {
        let cutout = rng.random_range(0..cutouts.len());
        let mut rotation_deg = uniform(&mut rng, cfg.rotation_deg);
        let mut scale = uniform(&mut rng, cfg.scale);
        let blur_kernel = (rng.random::<f64>() < cfg.blur_probability)
            .then(|| BLUR_KERNELS[rng.random_range(0..BLUR_KERNELS.len())]);
        let clahe = rng.random::<f64>() < cfg.clahe_probability;

        let mut mask = transform_cutout(&cutouts[cutout], rotation_deg, scale).1;
        if mask.is_empty() {
            // the object vanished under nearest sampling; paste it untransformed
            rotation_deg = 0.0;
            scale = 1.0;
            mask = cutouts[cutout].mask.clone();
        }
        let (pw, ph) = (mask.width() as i64, mask.height() as i64);
        let span = |canvas: i64, size: i64| {
            let slack = (cfg.off_canvas_max * size as f64).floor() as i64;
            let (a, b) = (-slack, canvas - size + slack);
            (a.min(b), a.max(b))
        };
        let (x_lo, x_hi) = span(cw, pw);
        let (y_lo, y_hi) = span(ch, ph);
        let on_canvas = |x: i64, y: i64| {
            mask.extent().is_some_and(|r| {
                (r.y0..r.y1).any(|my| {
                    let cy = y + my as i64;
                    (0..ch).contains(&cy)
                        && (r.x0..r.x1).any(|mx| {
                            let cx = x + mx as i64;
                            (0..cw).contains(&cx) && mask.get(mx, my)
                        })
                })
            })
        };
        let mut pos = None;
        for _ in 0..PLACEMENT_TRIES {
            let x = rng.random_range(x_lo..=x_hi);
            let y = rng.random_range(y_lo..=y_hi);
            if on_canvas(x, y) {
                pos = Some((x, y));
                break;
            }
        }
        let (x, y) = pos.unwrap_or(((cw - pw) / 2, (ch - ph) / 2));
        layers.push(PasteLayer {
            cutout,
            rotation_deg,
            scale,
            x,
            y,
            blur_kernel,
            clahe,
            z,
        });
    }
    Ok(CompositionPlan {
        width: cfg.canvas_width,
        height: cfg.canvas_height,
        background,
        layers,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::BinaryMask;
    use crate::raster::{ColorMode, Raster};

    fn pool() -> Vec<Cutout> {
        (0..3)
            .map(|i| {
                let img = Raster::filled(30 + i * 10, 20, ColorMode::Rgb, 50 * i as u8);
                let mask = BinaryMask::from_rect(30 + i * 10, 20, 2, 2, 20, 15);
                Cutout::new(i + 1, img, mask).unwrap()
            })
            .collect()
    }

    fn small_cfg() -> ComposerConfig {
        ComposerConfig {
            canvas_width: 200,
            canvas_height: 150,
            max_side: 200,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_plan() {
        let bg = BackgroundSpec::Mosaic { seed: 3 };
        let a = plan_composition(&pool(), bg, &small_cfg(), 42).unwrap();
        let b = plan_composition(&pool(), bg, &small_cfg(), 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, plan_composition(&pool(), bg, &small_cfg(), 43).unwrap());
    }

    #[test]
    fn fixed_count() {
        let mut cfg = small_cfg();
        cfg.objects_per_image = ObjectCount { mean: 1.0, min: 1, max: 1 };
        for seed in 0..20 {
            let p = plan_composition(&pool(), BackgroundSpec::Negative { index: 0 }, &cfg, seed).unwrap();
            assert_eq!(p.layers.len(), 1);
        }
    }

    #[test]
    fn empty_pool_rejected() {
        let r = plan_composition(&[], BackgroundSpec::Negative { index: 0 }, &small_cfg(), 1);
        assert!(matches!(r, Err(Error::EmptyPool(_))));
    }

    #[test]
    fn count_mean_converges() {
        let c = ComposerConfig::default().objects_per_image;
        let mut rng = rng_from_seed(7);
        let n = 10_000;
        let total: u64 = (0..n).map(|_| sample_object_count(&c, &mut rng) as u64).sum();
        let mean = total as f64 / n as f64;
        // sd of the mean is sqrt(30 * 0.5 * 0.5 / 10000) ~ 0.027
        assert!((mean - 16.0).abs() < 0.5, "mean {mean}");
        let mut rng = rng_from_seed(8);
        assert!((0..1000).all(|_| (1..=31).contains(&sample_object_count(&c, &mut rng))));
    }

    #[test]
    fn every_layer_touches_the_canvas() {
        let cfg = small_cfg();
        let pool = pool();
        for seed in 0..30 {
            let plan = plan_composition(&pool, BackgroundSpec::Mosaic { seed }, &cfg, seed).unwrap();
            for l in &plan.layers {
                let m = transform_cutout(&pool[l.cutout], l.rotation_deg, l.scale).1;
                let hit = (0..m.height()).any(|y| {
                    (0..m.width()).any(|x| {
                        let (cx, cy) = (l.x + x as i64, l.y + y as i64);
                        m.get(x, y) && (0..200).contains(&cx) && (0..150).contains(&cy)
                    })
                });
                assert!(hit);
            }
        }
    }
}
