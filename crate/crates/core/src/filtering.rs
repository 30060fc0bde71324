//! Gaussian low-pass filtering and illumination estimation.
//!
//! Two convolution paths produce the same result: a direct separable pass for
//! small kernels and a frequency-domain product for large ones. The FFT path
//! pre-extends the image by the kernel radius using the boundary rule, pads to
//! a 5-smooth size and crops, so circular wrap-around never reaches the output.

use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::spectral::{next_fast_len, run_batched, transpose, Fft2, C64};

/// Largest kernel handled by the direct separable path.
pub const DIRECT_MAX_KERNEL: usize = 31;

/// Gaussian low-pass parameters with `k = 2 * ceil(2 * sigma) + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    sigma: f64,
    kernel_size: usize,
}

impl GaussianSpec {
    pub fn from_sigma(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Param(format!("sigma must be positive, got {sigma}")));
        }
        let kernel_size = 2 * (2.0 * sigma).ceil() as usize + 1;
        Ok(Self { sigma, kernel_size })
    }

    /// Inverts the kernel-size rule with `sigma = (k - 1) / 4`.
    ///
    /// Odd `k >= 3` round-trips exactly; an even `k` lands on `k + 1`.
    pub fn from_kernel_size(k: usize) -> Result<Self> {
        if k < 3 {
            return Err(Error::Param(format!("kernel size must be >= 3, got {k}")));
        }
        Self::from_sigma((k - 1) as f64 / 4.0)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn radius(&self) -> usize {
        (self.kernel_size - 1) / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    /// Half-sample symmetric reflection (`... b a | a b c ... | c b ...`).
    #[default]
    Mirror,
    /// Edge pixel repeated.
    Replicate,
}

impl BoundaryMode {
    /// Maps any (possibly out-of-range) index onto `[0, n)`.
    #[inline]
    pub fn fold(self, i: isize, n: usize) -> usize {
        let n = n as isize;
        match self {
            BoundaryMode::Replicate => i.clamp(0, n - 1) as usize,
            BoundaryMode::Mirror => {
                let m = i.rem_euclid(2 * n);
                (if m < n { m } else { 2 * n - 1 - m }) as usize
            }
        }
    }
}

/// Normalized 1-D Gaussian samples at integer offsets `-r..=r`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    Ok(kernel_for(&GaussianSpec::from_sigma(sigma)?))
}

pub(crate) fn kernel_for(spec: &GaussianSpec) -> Vec<f64> {
    let r = spec.radius() as isize;
    let denom = 2.0 * spec.sigma * spec.sigma;
    let mut taps: Vec<f64> = (-r..=r)
        .map(|t| (-((t * t) as f64) / denom).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|v| *v /= sum);
    taps
}

/// Gaussian blur; direct separable for `k <= 31`, FFT otherwise.
pub fn convolve_lpf(img: &ImageBuffer, spec: &GaussianSpec, boundary: BoundaryMode) -> ImageBuffer {
    if spec.kernel_size <= DIRECT_MAX_KERNEL {
        convolve_direct(img, spec, boundary)
    } else {
        convolve_fft(img, spec, boundary)
    }
}

/// Two 1-D passes in the spatial domain.
pub fn convolve_direct(img: &ImageBuffer, spec: &GaussianSpec, boundary: BoundaryMode) -> ImageBuffer {
    let taps = kernel_for(spec);
    let rows = convolve_rows(img, &taps, boundary);
    convolve_rows(&rows.transposed(), &taps, boundary).transposed()
}

/// Correlates every row with a symmetric kernel under the boundary rule.
pub(crate) fn convolve_rows(img: &ImageBuffer, taps: &[f64], boundary: BoundaryMode) -> ImageBuffer {
    let (w, h) = (img.width(), img.height());
    let r = taps.len() / 2;
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, dst)| {
        let src = img.row(y);
        let ext: Vec<f64> = (0..w + 2 * r)
            .map(|i| src[boundary.fold(i as isize - r as isize, w)])
            .collect();
        for (x, d) in dst.iter_mut().enumerate() {
            *d = ext[x..x + taps.len()]
                .iter()
                .zip(taps)
                .map(|(a, b)| a * b)
                .sum();
        }
    });
    ImageBuffer::from_parts(w, h, img.levels(), out)
}

/// Spectrum of a centered symmetric kernel wrapped onto a length-`n` circle.
fn kernel_spectrum(planner: &mut FftPlanner<f64>, taps: &[f64], n: usize) -> Vec<C64> {
    let r = taps.len() / 2;
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for (i, &v) in taps.iter().enumerate() {
        let t = i as isize - r as isize;
        buf[t.rem_euclid(n as isize) as usize].re += v;
    }
    planner.plan_fft_forward(n).process(&mut buf);
    buf
}

/// Frequency-domain Gaussian blur with boundary pre-extension.
pub fn convolve_fft(img: &ImageBuffer, spec: &GaussianSpec, boundary: BoundaryMode) -> ImageBuffer {
    let taps = kernel_for(spec);
    let r = spec.radius();
    let (w, h) = (img.width(), img.height());
    let (ew, eh) = (w + 2 * r, h + 2 * r);
    let (pw, ph) = (next_fast_len(ew), next_fast_len(eh));

    let mut buf = vec![C64::new(0.0, 0.0); pw * ph];
    for ey in 0..eh {
        let sy = boundary.fold(ey as isize - r as isize, h);
        let src = img.row(sy);
        let dst = &mut buf[ey * pw..ey * pw + ew];
        for (ex, d) in dst.iter_mut().enumerate() {
            d.re = src[boundary.fold(ex as isize - r as isize, w)];
        }
    }

    let mut planner = FftPlanner::new();
    let fft = Fft2::new(&mut planner, pw, ph);
    let kx = kernel_spectrum(&mut planner, &taps, pw);
    let ky = kernel_spectrum(&mut planner, &taps, ph);

    // Rows below `eh` are all zero, so only the occupied band is transformed.
    run_batched(fft.row_forward(), &mut buf[..eh * pw], pw);
    let mut cols = transpose(&buf, pw, ph);
    run_batched(fft.col_forward(), &mut cols, ph);
    cols.par_chunks_mut(ph).enumerate().for_each(|(x, col)| {
        let gx = kx[x];
        for (y, c) in col.iter_mut().enumerate() {
            *c *= gx * ky[y];
        }
    });
    run_batched(fft.col_inverse(), &mut cols, ph);
    let mut rows = transpose(&cols, ph, pw);
    run_batched(fft.row_inverse(), &mut rows[r * pw..(r + h) * pw], pw);

    let scale = 1.0 / (pw * ph) as f64;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let base = (y + r) * pw + r;
        out.extend(rows[base..base + w].iter().map(|c| c.re * scale));
    }
    ImageBuffer::from_parts(w, h, img.levels(), out)
}

/// Low-frequency estimate `LPF(img) - min(img)`.
pub fn estimate_illumination(
    img: &ImageBuffer,
    spec: &GaussianSpec,
    boundary: BoundaryMode,
) -> ImageBuffer {
    let floor = img.min();
    convolve_lpf(img, spec, boundary).map(|v| v - floor)
}

/// `img - illu`, pixelwise. Negative results are kept.
pub fn remove_illumination(img: &ImageBuffer, illu: &ImageBuffer) -> Result<ImageBuffer> {
    img.zip_map(illu, |u, b| u - b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::from_fn(w, h, 256, |_, _| rng.random::<f64>())
    }

    /// Unoptimized 2-D reference: full double sum over the kernel footprint.
    fn brute_force(img: &ImageBuffer, spec: &GaussianSpec, boundary: BoundaryMode) -> ImageBuffer {
        let taps = kernel_for(spec);
        let r = spec.radius() as isize;
        let (w, h) = (img.width(), img.height());
        ImageBuffer::from_fn(w, h, img.levels(), |x, y| {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let sx = boundary.fold(x as isize + dx, w);
                    let sy = boundary.fold(y as isize + dy, h);
                    acc += taps[(dx + r) as usize] * taps[(dy + r) as usize] * img.get(sx, sy);
                }
            }
            acc
        })
    }

    #[test]
    fn kernel_size_rule() {
        assert_eq!(GaussianSpec::from_sigma(1.0).unwrap().kernel_size(), 5);
        assert_eq!(GaussianSpec::from_sigma(2.5).unwrap().kernel_size(), 11);
        assert_eq!(GaussianSpec::from_sigma(0.1).unwrap().kernel_size(), 3);
        assert_eq!(GaussianSpec::from_kernel_size(49).unwrap().kernel_size(), 49);
        assert_eq!(GaussianSpec::from_kernel_size(48).unwrap().kernel_size(), 49);
        assert!(GaussianSpec::from_sigma(0.0).is_err());
        assert!(GaussianSpec::from_sigma(-1.0).is_err());
        assert!(GaussianSpec::from_kernel_size(1).is_err());
    }

    #[test]
    fn kernel_normalized_and_symmetric() {
        for sigma in [0.3, 1.0, 2.5, 7.7, 32.0] {
            let k = gaussian_kernel(sigma).unwrap();
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..k.len() / 2 {
                assert_eq!(k[i], k[k.len() - 1 - i]);
            }
        }
    }

    #[test]
    fn mirror_fold() {
        let m = BoundaryMode::Mirror;
        let got: Vec<usize> = (-4..8).map(|i| m.fold(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
        assert_eq!(m.fold(-3, 1), 0);
        assert_eq!(BoundaryMode::Replicate.fold(-3, 4), 0);
        assert_eq!(BoundaryMode::Replicate.fold(9, 4), 3);
    }

    #[test]
    fn constant_is_preserved() {
        let img = ImageBuffer::filled(20, 13, 42.0, 256);
        for sigma in [1.0, 9.0] {
            let spec = GaussianSpec::from_sigma(sigma).unwrap();
            for out in [convolve_direct(&img, &spec, BoundaryMode::Mirror), convolve_fft(&img, &spec, BoundaryMode::Replicate)] {
                assert!(out.data().iter().all(|v| (v - 42.0).abs() < 1e-9));
            }
        }
    }

    #[test]
    fn impulse_response_is_outer_product() {
        let spec = GaussianSpec::from_sigma(2.0).unwrap();
        let taps = kernel_for(&spec);
        let n = 21;
        let c = n / 2;
        let img = ImageBuffer::from_fn(n, n, 256, |x, y| if x == c && y == c { 1.0 } else { 0.0 });
        let r = spec.radius();
        for out in [convolve_direct(&img, &spec, BoundaryMode::Mirror), convolve_fft(&img, &spec, BoundaryMode::Mirror)] {
            for y in 0..n {
                for x in 0..n {
                    let expected = if x.abs_diff(c) <= r && y.abs_diff(c) <= r {
                        taps[x + r - c] * taps[y + r - c]
                    } else {
                        0.0
                    };
                    assert!((out.get(x, y) - expected).abs() < 1e-9, "({x},{y})");
                }
            }
        }
    }

    #[test]
    fn direct_matches_brute_force() {
        let img = random_image(17, 11, 3);
        for boundary in [BoundaryMode::Mirror, BoundaryMode::Replicate] {
            for sigma in [0.7, 3.0, 6.0] {
                let spec = GaussianSpec::from_sigma(sigma).unwrap();
                let a = convolve_direct(&img, &spec, boundary);
                let b = brute_force(&img, &spec, boundary);
                let diff = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
                assert!(diff < 1e-12, "sigma {sigma} {boundary:?}: {diff}");
            }
        }
    }

    #[test]
    fn fft_matches_direct_on_random_64() {
        let img = random_image(64, 64, 11);
        for sigma in [1.0, 5.0, 12.0, 32.0] {
            let spec = GaussianSpec::from_sigma(sigma).unwrap();
            for boundary in [BoundaryMode::Mirror, BoundaryMode::Replicate] {
                let a = convolve_direct(&img, &spec, boundary);
                let b = convolve_fft(&img, &spec, boundary);
                let diff = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
                assert!(diff < 1e-6, "sigma {sigma}: {diff}");
            }
        }
    }

    #[test]
    fn fft_handles_non_square_and_kernel_wider_than_image() {
        let img = random_image(9, 23, 5);
        let spec = GaussianSpec::from_sigma(15.0).unwrap();
        let a = convolve_direct(&img, &spec, BoundaryMode::Mirror);
        let b = convolve_fft(&img, &spec, BoundaryMode::Mirror);
        let diff = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9);
    }

    #[test]
    fn mean_preserved_under_mirror() {
        let img = random_image(40, 30, 8);
        let spec = GaussianSpec::from_sigma(4.0).unwrap();
        let out = convolve_lpf(&img, &spec, BoundaryMode::Mirror);
        // Mirror extension preserves the mean only approximately near borders.
        assert!((out.mean() - img.mean()).abs() < 1e-2);
        let flat = ImageBuffer::filled(30, 30, 0.25, 256);
        assert!((convolve_lpf(&flat, &spec, BoundaryMode::Mirror).mean() - 0.25).abs() < 1e-6);
    }

    #[test]
    fn illumination_of_constant_is_zero() {
        let img = ImageBuffer::filled(16, 16, 9.0, 256);
        let spec = GaussianSpec::from_sigma(2.0).unwrap();
        let illu = estimate_illumination(&img, &spec, BoundaryMode::Mirror);
        assert!(illu.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn illumination_zero_min_matches_lpf() {
        let mut img = random_image(24, 24, 2).map(|v| v * 100.0);
        let mut data = img.clone().into_data();
        data[0] = 0.0;
        img = ImageBuffer::new(24, 24, data, 256).unwrap();
        let spec = GaussianSpec::from_sigma(3.0).unwrap();
        let illu = estimate_illumination(&img, &spec, BoundaryMode::Mirror);
        assert_eq!(illu, convolve_lpf(&img, &spec, BoundaryMode::Mirror));
    }

    #[test]
    fn illumination_of_ramp_is_shifted_lpf() {
        let img = ImageBuffer::from_fn(32, 20, 256, |x, y| 10.0 + 2.0 * x as f64 + 0.5 * y as f64);
        let spec = GaussianSpec::from_sigma(3.0).unwrap();
        let illu = estimate_illumination(&img, &spec, BoundaryMode::Mirror);
        let oracle = brute_force(&img, &spec, BoundaryMode::Mirror);
        for (a, b) in illu.data().iter().zip(oracle.data()) {
            assert!((a - (b - 10.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn removal_identities_and_shape() {
        let img = random_image(8, 6, 1);
        let zeros = ImageBuffer::filled(8, 6, 0.0, 256);
        assert!(remove_illumination(&img, &img).unwrap().data().iter().all(|&v| v == 0.0));
        assert_eq!(remove_illumination(&img, &zeros).unwrap(), img);
        let other = ImageBuffer::filled(6, 8, 0.0, 256);
        assert!(matches!(remove_illumination(&img, &other), Err(Error::Shape { .. })));
    }

    #[test]
    fn removal_flattens_planar_gradient() {
        // Flat target with a checker texture on a strong planar ramp.
        let (w, h) = (128, 128);
        let img = ImageBuffer::from_fn(w, h, 256, |x, y| {
            let texture = if (x / 4 + y / 4) % 2 == 0 { 20.0 } else { 0.0 };
            texture + 60.0 + 1.2 * y as f64
        });
        let spec = GaussianSpec::from_sigma(20.0).unwrap();
        let illu = estimate_illumination(&img, &spec, BoundaryMode::Mirror);
        let homo = remove_illumination(&img, &illu).unwrap();
        let max_row_slope = |im: &ImageBuffer| {
            // Interior rows only: the ramp bends back at mirror boundaries.
            let means: Vec<f64> = (0..h).map(|y| im.row(y).iter().sum::<f64>() / w as f64).collect();
            means[32..96].windows(8).map(|win| (win[7] - win[0]).abs() / 7.0).fold(0.0, f64::max)
        };
        let before = max_row_slope(&img);
        let after = max_row_slope(&homo);
        assert!(after * 10.0 <= before, "before {before} after {after}");
    }
}
