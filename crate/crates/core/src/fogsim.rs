//! Forward model for low-visibility scenes: attenuated object light, additive
//! noise and a scattered illumination veil.
//!
//! `view = clear * T + n + illum * (1 - T)` with `T = exp(-beta * distance)`.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::metrics::contrast;

pub fn transmittance(beta: f64, distance: f64) -> Result<f64> {
    if !(beta >= 0.0) || !(distance >= 0.0) {
        return Err(Error::Param(format!(
            "extinction and distance must be >= 0, got {beta} and {distance}"
        )));
    }
    Ok((-beta * distance).exp())
}

/// Shape of the scattered-light field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IllumFieldSpec {
    Flat {
        level: f64,
    },
    /// `base + slope_x * x + slope_y * y`, floored at zero.
    Planar {
        base: f64,
        slope_x: f64,
        slope_y: f64,
    },
    /// `floor + (peak - floor) * exp(-r^2 / (2 s^2))`; centre in fractions of
    /// the frame, `s = sigma * max(width, height)`.
    Vignette {
        peak: f64,
        floor: f64,
        center_x: f64,
        center_y: f64,
        sigma: f64,
    },
}

impl Default for IllumFieldSpec {
    fn default() -> Self {
        IllumFieldSpec::Flat { level: 128.0 }
    }
}

pub fn illumination_field(spec: &IllumFieldSpec, width: usize, height: usize, levels: u32) -> ImageBuffer {
    match *spec {
        IllumFieldSpec::Flat { level } => ImageBuffer::filled(width, height, level.max(0.0), levels),
        IllumFieldSpec::Planar { base, slope_x, slope_y } => ImageBuffer::from_fn(width, height, levels, |x, y| {
            (base + slope_x * x as f64 + slope_y * y as f64).max(0.0)
        }),
        IllumFieldSpec::Vignette { peak, floor, center_x, center_y, sigma } => {
            let (cx, cy) = (center_x * width as f64, center_y * height as f64);
            let s = sigma * width.max(height) as f64;
            ImageBuffer::from_fn(width, height, levels, |x, y| {
                let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                (floor + (peak - floor) * (-r2 / (2.0 * s * s)).exp()).max(0.0)
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FogParams {
    pub beta_ext: f64,
    pub distance: f64,
    pub illum: IllumFieldSpec,
    /// Standard deviation of the additive noise, in intensity units.
    pub snake_sigma: f64,
    pub seed: u64,
}

impl Default for FogParams {
    fn default() -> Self {
        Self {
            beta_ext: 0.0,
            distance: 1.0,
            illum: IllumFieldSpec::default(),
            snake_sigma: 0.0,
            seed: 0,
        }
    }
}

impl FogParams {
    pub fn transmittance(&self) -> Result<f64> {
        transmittance(self.beta_ext, self.distance)
    }
}

/// Fogged view of `clear` with the field described by `p.illum`.
pub fn synthesize_fog(clear: &ImageBuffer, p: &FogParams) -> Result<ImageBuffer> {
    let field = illumination_field(&p.illum, clear.width(), clear.height(), clear.levels());
    synthesize_fog_with(clear, &field, p)
}

/// Fogged view of `clear` with an explicit illumination field; `p.illum` is ignored.
pub fn synthesize_fog_with(clear: &ImageBuffer, field: &ImageBuffer, p: &FogParams) -> Result<ImageBuffer> {
    clear.check_same_shape(field)?;
    let t = p.transmittance()?;
    if !(p.snake_sigma >= 0.0) {
        return Err(Error::Param(format!("noise sigma must be >= 0, got {}", p.snake_sigma)));
    }
    let top = clear.max_level();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let normal = (p.snake_sigma > 0.0).then(|| Normal::new(0.0, p.snake_sigma).expect("finite sigma"));
    clear.zip_map(field, |c, b| {
        let n = normal.as_ref().map_or(0.0, |d| d.sample(&mut rng));
        (c * t + n + b * (1.0 - t)).clamp(0.0, top)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

/// Vertical bars alternating between a bright and a dark level inside `region`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarTarget {
    pub region: Rect,
    pub period: usize,
    pub bright: f64,
    pub dark: f64,
}

impl BarTarget {
    pub fn is_bright(&self, x: usize) -> bool {
        ((x - self.region.x0) / (self.period / 2).max(1)) % 2 == 0
    }

    fn contains(&self, x: usize, y: usize) -> bool {
        let r = &self.region;
        (r.x0..r.x1).contains(&x) && (r.y0..r.y1).contains(&y)
    }

    /// Contrast `(B - D) / (B + D)` between the mean bright-bar and dark-bar intensities.
    pub fn contrast(&self, img: &ImageBuffer) -> Result<f64> {
        let r = &self.region;
        if r.x1 > img.width() || r.y1 > img.height() {
            return Err(Error::Param("target lies outside the image".into()));
        }
        let (mut b, mut nb, mut d, mut nd) = (0.0, 0usize, 0.0, 0usize);
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                if self.is_bright(x) {
                    b += img.get(x, y);
                    nb += 1;
                } else {
                    d += img.get(x, y);
                    nd += 1;
                }
            }
        }
        if nb == 0 || nd == 0 {
            return Err(Error::Param("target needs both bright and dark bars".into()));
        }
        contrast(b / nb as f64, d / nd as f64)
    }
}

/// Procedural clear scene: smooth random blobs over a mid-gray floor, plus a bar target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticScene {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub levels: u32,
}

impl Default for SyntheticScene {
    fn default() -> Self {
        Self {
            seed: 0,
            width: 512,
            height: 512,
            levels: 256,
        }
    }
}

impl SyntheticScene {
    pub fn render(&self) -> Result<(ImageBuffer, BarTarget)> {
        let (w, h) = (self.width, self.height);
        if w < 32 || h < 32 || self.levels < 2 {
            return Err(Error::Param(format!("synthetic scene too small: {w}x{h}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let unit = self.levels as f64 / 256.0;
        let side = w.min(h);
        let blobs: Vec<(f64, f64, f64, f64)> = (0..8)
            .map(|_| {
                (
                    rng.random_range(0.0..w as f64),
                    rng.random_range(0.0..h as f64),
                    rng.random_range(0.02..0.08) * side as f64,
                    rng.random_range(-50.0..50.0),
                )
            })
            .collect();
        let tw = side / 5;
        let (tx, ty) = (rng.random_range(0..w - tw), rng.random_range(0..h - tw));
        let target = BarTarget {
            region: Rect { x0: tx, y0: ty, x1: tx + tw, y1: ty + tw },
            period: (tw / 6).max(2) & !1,
            bright: 200.0 * unit,
            dark: 100.0 * unit,
        };
        let top = f64::from(self.levels - 1);
        let img = ImageBuffer::from_fn(w, h, self.levels, |x, y| {
            if target.contains(x, y) {
                return if target.is_bright(x) { target.bright } else { target.dark };
            }
            let v: f64 = blobs
                .iter()
                .map(|&(cx, cy, s, a)| {
                    let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    a * (-r2 / (2.0 * s * s)).exp()
                })
                .sum();
            let ripple = 15.0 * ((x as f64 / 7.0).sin() * (y as f64 / 11.0).cos());
            ((120.0 + v + ripple) * unit).clamp(0.0, top)
        });
        Ok((img, target))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ClearSource {
    File { path: PathBuf },
    Synthetic(SyntheticScene),
}

/// One reproducible clear/foggy pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecipe {
    pub name: String,
    pub clear: ClearSource,
    pub fog: FogParams,
}

/// Randomized corpus: `beta * distance` uniform in `[1, 4]`, alternating planar
/// and vignette illumination, light additive noise.
pub fn corpus(count: usize, seed: u64, width: usize, height: usize) -> Vec<SceneRecipe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let illum = if i % 2 == 0 {
                let base = rng.random_range(60.0..120.0);
                let span = rng.random_range(60.0..120.0);
                let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                IllumFieldSpec::Planar {
                    base: base + span * 0.5 * (angle.cos().abs() + angle.sin().abs()),
                    slope_x: -span * angle.cos() / width as f64,
                    slope_y: -span * angle.sin() / height as f64,
                }
            } else {
                IllumFieldSpec::Vignette {
                    peak: rng.random_range(170.0..230.0),
                    floor: rng.random_range(40.0..90.0),
                    center_x: rng.random_range(0.3..0.7),
                    center_y: rng.random_range(0.3..0.7),
                    sigma: rng.random_range(0.25..0.5),
                }
            };
            SceneRecipe {
                name: format!("scene_{i:03}"),
                clear: ClearSource::Synthetic(SyntheticScene {
                    seed: rng.random(),
                    width,
                    height,
                    levels: 256,
                }),
                fog: FogParams {
                    beta_ext: rng.random_range(1.0..=4.0),
                    distance: 1.0,
                    illum,
                    snake_sigma: 0.5,
                    seed: rng.random(),
                },
            }
        })
        .collect()
}
