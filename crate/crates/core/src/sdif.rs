//! Cutoff-kernel selection from the SSIM-versus-kernel-size curve.
//!
//! For each odd kernel size `k` in a sweep the image is low-passed with
//! `sigma = (k - 1) / 4` and compared with itself by mean SSIM. The area left
//! under the curve, its value and its step-to-step change are combined into
//! one objective whose minimum gives the kernel used to estimate illumination.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::{estimate_illumination, BoundaryMode, GaussianSpec};
use crate::image::ImageBuffer;
use crate::metrics::{ssim, SsimConstants};

/// Largest number of kernel sizes the default stride allows.
pub const MAX_DEFAULT_SAMPLES: usize = 48;
pub const DEFAULT_K_MIN: usize = 5;

/// Weights on the integral, value and derivative terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdifWeights {
    pub p: f64,
    pub i: f64,
    pub d: f64,
    /// Objective values within `tie_tolerance * (p + i + d)` of the minimum
    /// count as ties, resolved toward the smaller kernel.
    pub tie_tolerance: f64,
}

impl Default for SdifWeights {
    fn default() -> Self {
        Self {
            p: 1.0,
            i: 0.3,
            d: 0.7,
            tie_tolerance: 0.01,
        }
    }
}

impl SdifWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.p, self.i, self.d];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Param("SDIF weights must be finite and >= 0".into()));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(Error::Param("SDIF weights must not all be zero".into()));
        }
        if !(0.0..1.0).contains(&self.tie_tolerance) {
            return Err(Error::Param("SDIF tie tolerance must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Kernel sizes to visit. Unset fields take image-dependent defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepRange {
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
    pub stride: Option<usize>,
}

impl SweepRange {
    pub fn new(k_min: usize, k_max: usize, stride: usize) -> Self {
        Self {
            k_min: Some(k_min),
            k_max: Some(k_max),
            stride: Some(stride),
        }
    }

    /// Concrete kernel sizes for a `width x height` image.
    ///
    /// Defaults: `k_min = 5`, `k_max = min(M, N) / 4` (at least `k_min + 4`,
    /// at most `min(M, N)`), and the smallest even stride giving at most 48 sizes.
    pub fn resolve(&self, width: usize, height: usize) -> Result<Vec<usize>> {
        let extent = width.min(height);
        let k_min = self.k_min.unwrap_or(DEFAULT_K_MIN);
        if k_min < 3 || k_min % 2 == 0 {
            return Err(Error::Param(format!("k_min must be odd and >= 3, got {k_min}")));
        }
        let k_max = self
            .k_max
            .unwrap_or_else(|| (extent / 4).max(k_min + 4).min(extent));
        if k_max > extent {
            return Err(Error::Param(format!(
                "k_max {k_max} exceeds the image extent {extent}"
            )));
        }
        if k_max < k_min {
            return Err(Error::Param(format!("k_max {k_max} is below k_min {k_min}")));
        }
        let span = k_max - k_min;
        let stride = match self.stride {
            Some(s) => s,
            None => {
                let mut s = 2;
                while span / s + 1 > MAX_DEFAULT_SAMPLES {
                    s += 2;
                }
                s
            }
        };
        if stride == 0 || stride % 2 == 1 {
            return Err(Error::Param(format!("stride must be even and positive, got {stride}")));
        }
        if stride > span {
            return Err(Error::Param(format!(
                "stride {stride} is larger than the sweep range {k_min}..={k_max}"
            )));
        }
        Ok((k_min..=k_max).step_by(stride).collect())
    }
}

/// SSIM of an image against its own low-pass estimate, per kernel size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsimCurve {
    pub kernel_sizes: Vec<usize>,
    pub ssim: Vec<f64>,
    /// Running sum of `ssim`.
    pub integral: Vec<f64>,
    /// `ssim[j + 1] - ssim[j]`, one shorter than the curve.
    pub derivative: Vec<f64>,
}

impl SsimCurve {
    pub fn from_values(kernel_sizes: Vec<usize>, ssim: Vec<f64>) -> Self {
        let integral = ssim
            .iter()
            .scan(0.0, |acc, &s| {
                *acc += s;
                Some(*acc)
            })
            .collect();
        let derivative = ssim.windows(2).map(|w| w[1] - w[0]).collect();
        Self {
            kernel_sizes,
            ssim,
            integral,
            derivative,
        }
    }

    pub fn len(&self) -> usize {
        self.kernel_sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernel_sizes.is_empty()
    }

    /// Writes `k, ssim, integral, derivative, J`. The last row repeats the final difference.
    pub fn write_csv<W: Write>(&self, objective: &[f64], writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["k", "ssim", "integral", "derivative", "J"])?;
        let deriv = padded_derivative(self);
        for j in 0..self.len() {
            out.write_record([
                self.kernel_sizes[j].to_string(),
                self.ssim[j].to_string(),
                self.integral[j].to_string(),
                deriv[j].to_string(),
                objective.get(j).map_or(String::new(), |v| v.to_string()),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Options shared by every kernel evaluated in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepOptions {
    pub ssim: SsimConstants,
    pub boundary: BoundaryMode,
    /// Evaluate on a 2x box-downsampled copy with halved kernel sizes.
    pub fast: bool,
}

fn halve(img: &ImageBuffer) -> ImageBuffer {
    let (w, h) = (img.width() / 2, img.height() / 2);
    ImageBuffer::from_fn(w.max(1), h.max(1), img.levels(), |x, y| {
        let (x0, y0) = (2 * x, 2 * y);
        let x1 = (x0 + 1).min(img.width() - 1);
        let y1 = (y0 + 1).min(img.height() - 1);
        0.25 * (img.get(x0, y0) + img.get(x1, y0) + img.get(x0, y1) + img.get(x1, y1))
    })
}

fn ssim_at(img: &ImageBuffer, shifted: &ImageBuffer, spec: &GaussianSpec, opts: &SweepOptions) -> Result<f64> {
    let illu = estimate_illumination(img, spec, opts.boundary);
    ssim(shifted, &illu, &opts.ssim)
}

/// Mean SSIM between `img - min(img)` and its illumination estimate for each `k`.
///
/// The illumination estimate is floored at the image minimum, so the image is
/// shifted the same way before comparison; a constant image scores 1 everywhere.
pub fn ssim_sweep(img: &ImageBuffer, range: &SweepRange, opts: &SweepOptions) -> Result<SsimCurve> {
    let kernel_sizes = range.resolve(img.width(), img.height())?;
    opts.ssim.validate()?;
    let (work, scale) = if opts.fast { (halve(img), 0.5) } else { (img.clone(), 1.0) };
    let floor = work.min();
    let shifted = work.map(|v| v - floor);
    let ssim: Vec<f64> = kernel_sizes
        .par_iter()
        .map(|&k| {
            let sigma = GaussianSpec::from_kernel_size(k)?.sigma() * scale;
            ssim_at(&work, &shifted, &GaussianSpec::from_sigma(sigma)?, opts)
        })
        .collect::<Result<_>>()?;
    Ok(SsimCurve::from_values(kernel_sizes, ssim))
}

/// Derivative extended to the curve length by repeating the last difference.
fn padded_derivative(curve: &SsimCurve) -> Vec<f64> {
    let mut d = curve.derivative.clone();
    if let Some(&last) = d.last() {
        d.push(last);
    } else {
        d.resize(curve.len(), 0.0);
    }
    d
}

/// Min-max normalization; a constant sequence maps to zeros.
fn unit_range(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / span).collect()
}

/// Area of the curve above its floor from each sample to the end of the sweep.
fn remaining_area(curve: &SsimCurve) -> Vec<f64> {
    let floor = curve.ssim.iter().copied().fold(f64::INFINITY, f64::min);
    let mut tail = vec![0.0; curve.len()];
    let mut acc = 0.0;
    for j in (0..curve.len()).rev() {
        acc += curve.ssim[j] - floor;
        tail[j] = acc;
    }
    tail
}

/// Combined objective `J(k)` for every sample of the curve.
///
/// Each term is min-max normalized over the sweep: the structure still left
/// above the curve's floor from `k` onward, the SSIM value itself, and the
/// magnitude of its step-to-step change. All three are small once the filter
/// has removed the scene's detail and the curve has levelled off.
pub fn objective(curve: &SsimCurve, w: &SdifWeights) -> Vec<f64> {
    let abs = |v: &[f64]| v.iter().map(|x| x.abs()).collect::<Vec<_>>();
    let integral = unit_range(&remaining_area(curve));
    let value = unit_range(&abs(&curve.ssim));
    let deriv = unit_range(&abs(&padded_derivative(curve)));
    (0..curve.len())
        .map(|j| w.p * integral[j] + w.i * value[j] + w.d * deriv[j])
        .collect()
}

/// Selected kernel and how it was reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub k_cutoff: usize,
    pub objective: Vec<f64>,
    /// Every SSIM sample was equal, so `k_cutoff` is simply the first kernel.
    pub degenerate: bool,
}

pub fn select_cutoff_kernel(curve: &SsimCurve, w: &SdifWeights) -> Result<Selection> {
    w.validate()?;
    if curve.len() < 3 {
        return Err(Error::Param(format!(
            "kernel selection needs at least 3 samples, got {}",
            curve.len()
        )));
    }
    let first = curve.ssim[0];
    if curve.ssim.iter().all(|&s| s == first) {
        return Ok(Selection {
            k_cutoff: curve.kernel_sizes[0],
            objective: vec![0.0; curve.len()],
            degenerate: true,
        });
    }
    let j = objective(curve, w);
    let lowest = j.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = w.tie_tolerance * (w.p + w.i + w.d);
    let best = j.iter().position(|&v| v <= lowest + slack).unwrap_or(0);
    Ok(Selection {
        k_cutoff: curve.kernel_sizes[best],
        objective: j,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ramp(x: usize) -> f64 {
        60.0 + 0.1 * x as f64
    }

    fn checker(n: usize) -> ImageBuffer {
        ImageBuffer::from_fn(n, n, 256, |x, y| {
            if ((x / 2) + (y / 2)) % 2 == 0 { ramp(x) + 60.0 } else { ramp(x) }
        })
    }

    fn blobs(n: usize, sigma: f64) -> ImageBuffer {
        let centres = [(0.25, 0.3), (0.7, 0.25), (0.45, 0.75), (0.85, 0.8)];
        ImageBuffer::from_fn(n, n, 256, |x, y| {
            let bump: f64 = centres
                .iter()
                .map(|&(cx, cy)| {
                    let dx = x as f64 - cx * n as f64;
                    let dy = y as f64 - cy * n as f64;
                    (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
                })
                .sum();
            ramp(x) + 60.0 * bump
        })
    }

    fn select(img: &ImageBuffer, range: &SweepRange, fast: bool) -> Selection {
        let opts = SweepOptions { fast, ..Default::default() };
        let curve = ssim_sweep(img, range, &opts).unwrap();
        select_cutoff_kernel(&curve, &SdifWeights::default()).unwrap()
    }

    #[test]
    fn default_range_is_bounded() {
        let ks = SweepRange::default().resolve(512, 600).unwrap();
        assert_eq!(ks[0], 5);
        assert!(*ks.last().unwrap() <= 128);
        assert!(ks.len() <= MAX_DEFAULT_SAMPLES);
        assert!(ks.windows(2).all(|w| w[1] - w[0] == 4));
        let big = SweepRange::default().resolve(2048, 2048).unwrap();
        assert!(big.len() <= MAX_DEFAULT_SAMPLES && big.len() > 40);
        assert!(big.iter().all(|k| k % 2 == 1));
        let tiny = SweepRange::default().resolve(12, 12).unwrap();
        assert_eq!(tiny, vec![5, 7, 9]);
    }

    #[test]
    fn range_errors() {
        assert!(matches!(SweepRange::new(5, 65, 2).resolve(64, 64), Err(Error::Param(_))));
        assert!(matches!(SweepRange::new(5, 21, 20).resolve(64, 64), Err(Error::Param(_))));
        assert!(SweepRange::new(5, 21, 3).resolve(64, 64).is_err());
        assert!(SweepRange::new(4, 21, 2).resolve(64, 64).is_err());
        assert_eq!(SweepRange::new(5, 21, 16).resolve(64, 64).unwrap(), vec![5, 21]);
    }

    #[test]
    fn curve_bookkeeping() {
        let c = SsimCurve::from_values(vec![5, 7, 9, 11], vec![1.0, 0.5, 0.25, 0.2]);
        assert_eq!(c.integral, vec![1.0, 1.5, 1.75, 1.95]);
        assert_eq!(c.derivative, vec![-0.5, -0.25, 0.2 - 0.25]);
        assert_eq!(padded_derivative(&c).len(), 4);
    }

    #[test]
    fn objective_by_hand() {
        let c = SsimCurve::from_values(vec![5, 7, 9], vec![1.0, 0.5, 0.5]);
        // Remaining area above floor 0.5: [0.5, 0, 0]; value: [1, 0, 0];
        // |derivative| padded: [0.5, 0, 0].
        let j = objective(&c, &SdifWeights::default());
        assert_eq!(j, vec![2.0, 0.0, 0.0]);
        let sel = select_cutoff_kernel(&c, &SdifWeights::default()).unwrap();
        assert_eq!(sel.k_cutoff, 7);
        assert!(!sel.degenerate);
    }

    #[test]
    fn too_short_curve_is_rejected() {
        let c = SsimCurve::from_values(vec![5, 7], vec![1.0, 0.5]);
        assert!(select_cutoff_kernel(&c, &SdifWeights::default()).is_err());
        let bad = SdifWeights { p: 0.0, i: 0.0, d: 0.0, ..Default::default() };
        let c = SsimCurve::from_values(vec![5, 7, 9], vec![1.0, 0.5, 0.2]);
        assert!(select_cutoff_kernel(&c, &bad).is_err());
    }

    #[test]
    fn constant_image_is_degenerate() {
        let img = ImageBuffer::filled(64, 64, 77.0, 256);
        let curve = ssim_sweep(&img, &SweepRange::default(), &SweepOptions::default()).unwrap();
        assert!(curve.ssim.iter().all(|&s| s == 1.0));
        let sel = select_cutoff_kernel(&curve, &SdifWeights::default()).unwrap();
        assert!(sel.degenerate);
        assert_eq!(sel.k_cutoff, 5);
    }

    #[test]
    fn white_noise_plateaus_early() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let img = ImageBuffer::from_fn(256, 256, 256, |_, _| rng.random_range(0.0..256.0f64).floor());
        let curve = ssim_sweep(&img, &SweepRange::default(), &SweepOptions::default()).unwrap();
        let n = curve.len();
        let (first, q1, last) = (curve.ssim[0], curve.ssim[(n - 1) / 4], curve.ssim[n - 1]);
        assert!(q1 - last < 0.05 * (first - last), "{first} {q1} {last}");
    }

    #[test]
    fn high_frequency_selects_smaller_kernel() {
        let range = SweepRange::default();
        let fine = select(&checker(256), &range, false).k_cutoff;
        let coarse = select(&blobs(256, 20.0), &range, false).k_cutoff;
        assert!(fine < coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn exposure_scaling_keeps_selection() {
        let img = blobs(192, 12.0);
        let range = SweepRange::default();
        let stride = range.resolve(192, 192).unwrap()[1] - 5;
        let a = select(&img, &range, false).k_cutoff;
        let b = select(&img.map(|v| 0.5 * v), &range, false).k_cutoff;
        assert!(a.abs_diff(b) <= stride, "{a} vs {b}");
    }

    #[test]
    fn feature_scale_monotone() {
        let range = SweepRange::new(5, 63, 2);
        let ks: Vec<usize> = [2.0, 4.0, 8.0, 16.0]
            .iter()
            .map(|&s| select(&blobs(192, s), &range, false).k_cutoff)
            .collect();
        assert!(ks.windows(2).all(|w| w[0] <= w[1]), "{ks:?}");
    }

    #[test]
    fn fast_path_within_one_stride() {
        let range = SweepRange::default();
        for img in [checker(512), blobs(512, 40.0), blobs(512, 12.0)] {
            let stride = range.resolve(512, 512).unwrap()[1] - 5;
            let full = select(&img, &range, false).k_cutoff;
            let fast = select(&img, &range, true).k_cutoff;
            assert!(full.abs_diff(fast) <= stride, "{full} vs {fast}");
        }
    }

    #[test]
    fn csv_columns() {
        let c = SsimCurve::from_values(vec![5, 7, 9], vec![1.0, 0.5, 0.5]);
        let j = objective(&c, &SdifWeights::default());
        let mut buf = Vec::new();
        c.write_csv(&j, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,ssim,integral,derivative,J");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[3], "9,0.5,2,0,0");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn selection_stays_in_range(values in proptest::collection::vec(0.01f64..1.0, 3..40)) {
            let ks: Vec<usize> = (0..values.len()).map(|j| 5 + 2 * j).collect();
            let curve = SsimCurve::from_values(ks.clone(), values);
            prop_assert!(curve.integral.windows(2).all(|w| w[1] >= w[0]));
            prop_assert_eq!(curve.derivative.len(), ks.len() - 1);
            let sel = select_cutoff_kernel(&curve, &SdifWeights::default()).unwrap();
            prop_assert!(ks.contains(&sel.k_cutoff));
            prop_assert!(sel.k_cutoff % 2 == 1);
            prop_assert!(sel.objective.iter().all(|&j| (0.0..=2.0 + 1e-12).contains(&j)));
        }
    }
}
