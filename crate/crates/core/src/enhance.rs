//! Extremes-anchored histogram equalization, dithering and the full pipeline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Component, Error, Result};
use crate::filtering::{estimate_illumination, remove_illumination, BoundaryMode, GaussianSpec};
use crate::histogram::{cdf, level_of, Histogram};
use crate::image::{round_half_up, stretch_to_levels, ImageBuffer};
use crate::metrics::SsimConstants;
use crate::sdif::{select_cutoff_kernel, ssim_sweep, SdifWeights, SsimCurve, SweepOptions, SweepRange};

pub const DEFAULT_ALPHA: f64 = 0.8;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Param(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// Level index of every pixel together with the anchored CDF map
/// `(D(i) - D(i_min)) / (D(i_max) - D(i_min))` over all `levels` bins.
fn anchored_cdf(img: &ImageBuffer, levels: u32, which: Component) -> Result<(Vec<usize>, Vec<f64>)> {
    if levels < 2 {
        return Err(Error::Param(format!("need at least 2 levels, got {levels}")));
    }
    let mut counts = vec![0u64; levels as usize];
    let idx: Vec<usize> = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| level_of(v, i, levels))
        .collect::<Result<_>>()?;
    for &l in &idx {
        counts[l] += 1;
    }
    let d = cdf(&Histogram::from_counts(counts))?;
    let (lo, span) = (d.at(d.i_min()), d.span());
    if span <= 0.0 {
        return Err(Error::DegenerateHistogram(which));
    }
    let map = d.values().iter().map(|&v| ((v - lo) / span).max(0.0)).collect();
    Ok((idx, map))
}

/// `e = (L - 1) * alpha * (D(i) - D(i_min)) / (D(i_max) - D(i_min))`.
///
/// Intensities are rounded half up to levels of `[0, levels - 1]`; the output is
/// real-valued and only quantized when saved.
pub fn mhe(img: &ImageBuffer, alpha: f64, levels: u32) -> Result<ImageBuffer> {
    check_alpha(alpha)?;
    let (idx, map) = anchored_cdf(img, levels, Component::Input)?;
    let scale = f64::from(levels - 1) * alpha;
    let data = idx.iter().map(|&l| scale * map[l]).collect();
    ImageBuffer::new(img.width(), img.height(), data, levels)
}

/// Central-difference gradient magnitude, one-sided at the borders.
pub fn max_gradient(img: &ImageBuffer) -> f64 {
    let (w, h) = (img.width(), img.height());
    let diff = |a: f64, b: f64, span: usize| (a - b) / span as f64;
    let mut best = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            let gx = if w < 2 {
                0.0
            } else if x == 0 {
                diff(img.get(1, y), img.get(0, y), 1)
            } else if x == w - 1 {
                diff(img.get(x, y), img.get(x - 1, y), 1)
            } else {
                diff(img.get(x + 1, y), img.get(x - 1, y), 2)
            };
            let gy = if h < 2 {
                0.0
            } else if y == 0 {
                diff(img.get(x, 1), img.get(x, 0), 1)
            } else if y == h - 1 {
                diff(img.get(x, y), img.get(x, y - 1), 1)
            } else {
                diff(img.get(x, y + 1), img.get(x, y - 1), 2)
            };
            best = best.max(gx.hypot(gy));
        }
    }
    best
}

/// Adds zero-mean Gaussian noise with `sigma = max_gradient / 3`, drawn per
/// pixel in row-major order from a ChaCha8 stream seeded with `seed`.
///
/// Returns the dithered image and the sigma used. No clamping is applied.
pub fn visual_optimize(filtered: &ImageBuffer, seed: u64) -> (ImageBuffer, f64) {
    let sigma = max_gradient(filtered) / 3.0;
    if sigma == 0.0 {
        return (filtered.clone(), 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    (filtered.map(|v| v + normal.sample(&mut rng)), sigma)
}

/// Weighted sum of the anchored CDF maps of both components, scaled to
/// `[0, L - 1]`. A component whose weight is zero may be constant.
pub fn combine_enhance(homo: &ImageBuffer, illu: &ImageBuffer, alpha: f64, levels: u32) -> Result<ImageBuffer> {
    check_alpha(alpha)?;
    homo.check_same_shape(illu)?;
    let part = |img: &ImageBuffer, weight: f64, which| -> Result<Vec<f64>> {
        if weight == 0.0 {
            return Ok(vec![0.0; img.len()]);
        }
        let (idx, map) = anchored_cdf(img, levels, which)?;
        Ok(idx.iter().map(|&l| weight * map[l]).collect())
    };
    let h = part(homo, alpha, Component::Homogeneous)?;
    let l = part(illu, 1.0 - alpha, Component::Illumination)?;
    let top = f64::from(levels - 1);
    let data = h.iter().zip(&l).map(|(a, b)| (top * (a + b)).clamp(0.0, top)).collect();
    ImageBuffer::new(homo.width(), homo.height(), data, levels)
}

/// Stretch the occupied range onto `[0, levels - 1]` and round to integer codes.
pub fn requantize(img: &ImageBuffer, levels: u32) -> ImageBuffer {
    stretch_to_levels(img, levels).map(round_half_up)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub alpha: f64,
    pub sdif_weights: SdifWeights,
    pub sweep: SweepRange,
    /// Run the sweep on a 2x downsampled copy.
    pub fast_sweep: bool,
    /// Fixed kernel size; skips the sweep when set.
    pub kernel: Option<usize>,
    pub ssim_constants: SsimConstants,
    pub boundary: BoundaryMode,
    pub noise_seed: u64,
    /// Output gray levels; the input's when unset.
    pub output_levels: Option<u32>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            sdif_weights: SdifWeights::default(),
            sweep: SweepRange::default(),
            fast_sweep: false,
            kernel: None,
            ssim_constants: SsimConstants::default(),
            boundary: BoundaryMode::default(),
            noise_seed: 0,
            output_levels: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        self.sdif_weights.validate()?;
        self.ssim_constants.validate()?;
        if let Some(k) = self.kernel {
            GaussianSpec::from_kernel_size(k)?;
        }
        if matches!(self.output_levels, Some(l) if l < 2) {
            return Err(Error::Param("output_levels must be at least 2".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Conditions under which the pipeline fell back from the full path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Warning {
    /// Constant input, returned unchanged.
    ConstantInput,
    /// Flat SSIM curve; plain MHE was applied to the input.
    DegenerateCurve,
    /// Illumination quantized to a single level; only the homogeneous term was used.
    FlatIllumination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceResult {
    pub enhanced: ImageBuffer,
    /// Low-frequency estimate before dithering.
    pub illumination: ImageBuffer,
    /// `input - illumination`.
    pub homogeneous: ImageBuffer,
    pub k_cutoff: usize,
    /// Absent when the kernel was fixed.
    pub curve: Option<SsimCurve>,
    pub objective: Option<Vec<f64>>,
    pub noise_sigma: f64,
    pub warnings: Vec<Warning>,
}

pub fn hmhe_pipeline(img: &ImageBuffer, cfg: &PipelineConfig) -> Result<EnhanceResult> {
    cfg.validate()?;
    let levels = cfg.output_levels.unwrap_or(img.levels());
    let zeros = || img.map(|_| 0.0);

    let (k_cutoff, curve, objective, degenerate) = match cfg.kernel {
        Some(k) => (GaussianSpec::from_kernel_size(k)?.kernel_size(), None, None, false),
        None if img.is_constant() => (0, None, None, true),
        None => {
            let opts = SweepOptions {
                ssim: cfg.ssim_constants,
                boundary: cfg.boundary,
                fast: cfg.fast_sweep,
            };
            let curve = ssim_sweep(img, &cfg.sweep, &opts)?;
            let sel = select_cutoff_kernel(&curve, &cfg.sdif_weights)?;
            (sel.k_cutoff, Some(curve), Some(sel.objective), sel.degenerate)
        }
    };

    if img.is_constant() {
        log::warn!("constant input returned unchanged");
        return Ok(EnhanceResult {
            enhanced: img.clone().with_levels(levels),
            illumination: zeros(),
            homogeneous: img.clone(),
            k_cutoff,
            curve,
            objective,
            noise_sigma: 0.0,
            warnings: vec![Warning::ConstantInput],
        });
    }
    if degenerate {
        log::warn!("flat SSIM curve, falling back to plain MHE");
        return Ok(EnhanceResult {
            enhanced: mhe(&requantize(img, levels), cfg.alpha, levels)?,
            illumination: zeros(),
            homogeneous: img.clone(),
            k_cutoff,
            curve,
            objective,
            noise_sigma: 0.0,
            warnings: vec![Warning::DegenerateCurve],
        });
    }

    let spec = GaussianSpec::from_kernel_size(k_cutoff)?;
    let illumination = estimate_illumination(img, &spec, cfg.boundary);
    let homogeneous = remove_illumination(img, &illumination)?;
    let (dithered, noise_sigma) = visual_optimize(&illumination, cfg.noise_seed);

    let homo_q = requantize(&homogeneous, levels);
    let illu_q = requantize(&dithered, levels);
    let mut warnings = Vec::new();
    let enhanced = match combine_enhance(&homo_q, &illu_q, cfg.alpha, levels) {
        Err(Error::DegenerateHistogram(Component::Illumination)) => {
            log::warn!("illumination quantized to one level, using the homogeneous term only");
            warnings.push(Warning::FlatIllumination);
            combine_enhance(&homo_q, &illu_q, 1.0, levels)?.map(|v| cfg.alpha * v)
        }
        other => other?,
    };
    Ok(EnhanceResult {
        enhanced,
        illumination,
        homogeneous,
        k_cutoff,
        curve,
        objective,
        noise_sigma,
        warnings,
    })
}
