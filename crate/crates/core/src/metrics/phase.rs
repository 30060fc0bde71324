//! Phase congruency from a bank of log-Gabor filters (4 scales, 4 orientations).
//!
//! Follows the formulation used by FSIM: per orientation, local energy is the
//! phase-deviation-weighted sum of the even/odd filter responses, a noise
//! threshold estimated from the finest scale is subtracted, the remainder is
//! down-weighted where the response spreads over too few scales, and the result
//! is divided by the summed response amplitudes over all orientations.

use std::f64::consts::PI;

use rustfft::FftPlanner;

use crate::image::ImageBuffer;
use crate::spectral::{Fft2, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogGaborBank {
    pub scales: usize,
    pub orientations: usize,
    pub min_wavelength: f64,
    pub mult: f64,
    pub sigma_on_f: f64,
    pub d_theta_on_sigma: f64,
    /// Noise threshold in standard deviations above the mean noise energy.
    pub noise_k: f64,
    /// Fractional frequency spread below which congruency is penalized.
    pub spread_cutoff: f64,
    /// Sharpness of the frequency-spread sigmoid.
    pub spread_gain: f64,
    pub epsilon: f64,
}

impl Default for LogGaborBank {
    fn default() -> Self {
        Self {
            scales: 4,
            orientations: 4,
            min_wavelength: 6.0,
            mult: 2.0,
            sigma_on_f: 0.55,
            d_theta_on_sigma: 1.2,
            noise_k: 2.0,
            spread_cutoff: 0.5,
            spread_gain: 10.0,
            epsilon: 1e-4,
        }
    }
}

/// Normalized frequency of FFT bin `u` for an axis of length `n`.
///
/// Odd lengths divide by `n - 1`, matching the usual frequency-grid convention.
fn axis_frequency(u: usize, n: usize) -> f64 {
    let half = if n % 2 == 1 { (n - 1) / 2 } else { n / 2 - 1 };
    let signed = if u <= half { u as f64 } else { u as f64 - n as f64 };
    let denom = if n % 2 == 1 { (n - 1).max(1) } else { n } as f64;
    signed / denom
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Per-pixel phase congruency in `[0, 1]`, row-major like the input.
///
/// The image is standardized first, so the map is invariant to positive affine
/// intensity changes; a constant image yields all zeros.
pub fn phase_congruency(img: &ImageBuffer) -> Vec<f64> {
    phase_congruency_with(img, &LogGaborBank::default())
}

pub fn phase_congruency_with(img: &ImageBuffer, bank: &LogGaborBank) -> Vec<f64> {
    let (cols, rows) = (img.width(), img.height());
    let n = rows * cols;
    let mean = img.mean();
    let var = img.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return vec![0.0; n];
    }
    let sd = var.sqrt();

    let mut planner = FftPlanner::new();
    let fft = Fft2::new(&mut planner, cols, rows);
    let mut image_fft: Vec<C64> = img.data().iter().map(|&v| C64::new((v - mean) / sd, 0.0)).collect();
    fft.forward(&mut image_fft);

    // Radius, orientation and the Butterworth low-pass on the frequency grid.
    let mut radius = vec![0.0; n];
    let mut sin_t = vec![0.0; n];
    let mut cos_t = vec![0.0; n];
    let mut lowpass = vec![0.0; n];
    for v in 0..rows {
        let fy = axis_frequency(v, rows);
        for u in 0..cols {
            let fx = axis_frequency(u, cols);
            let i = v * cols + u;
            let r = (fx * fx + fy * fy).sqrt();
            lowpass[i] = 1.0 / (1.0 + (r / 0.45).powi(30));
            radius[i] = r;
            let theta = (-fy).atan2(fx);
            sin_t[i] = theta.sin();
            cos_t[i] = theta.cos();
        }
    }
    radius[0] = 1.0;

    let log_sigma_sq = 2.0 * bank.sigma_on_f.ln().powi(2);
    let log_gabor: Vec<Vec<f64>> = (0..bank.scales)
        .map(|s| {
            let wavelength = bank.min_wavelength * bank.mult.powi(s as i32);
            let fo = 1.0 / wavelength;
            let mut g: Vec<f64> = radius
                .iter()
                .zip(&lowpass)
                .map(|(&r, &lp)| (-(r / fo).ln().powi(2) / log_sigma_sq).exp() * lp)
                .collect();
            g[0] = 0.0;
            g
        })
        .collect();

    let theta_sigma = PI / bank.orientations as f64 / bank.d_theta_on_sigma;
    let sqrt_n = (n as f64).sqrt();
    let inv_n = 1.0 / n as f64;

    let mut energy_all = vec![0.0; n];
    let mut an_all = vec![0.0; n];

    for o in 0..bank.orientations {
        let angle = o as f64 * PI / bank.orientations as f64;
        let (sa, ca) = angle.sin_cos();
        let spread: Vec<f64> = (0..n)
            .map(|i| {
                let ds = sin_t[i] * ca - cos_t[i] * sa;
                let dc = cos_t[i] * ca + sin_t[i] * sa;
                let dtheta = ds.atan2(dc).abs();
                (-(dtheta * dtheta) / (2.0 * theta_sigma * theta_sigma)).exp()
            })
            .collect();

        let mut sum_e = vec![0.0; n];
        let mut sum_o = vec![0.0; n];
        let mut sum_an = vec![0.0; n];
        let mut max_an = vec![0.0f64; n];
        let mut responses: Vec<Vec<C64>> = Vec::with_capacity(bank.scales);
        let mut spatial_filters: Vec<Vec<f64>> = Vec::with_capacity(bank.scales);
        let mut em_n = 0.0;

        for (s, gabor) in log_gabor.iter().enumerate() {
            let filter: Vec<f64> = gabor.iter().zip(&spread).map(|(g, sp)| g * sp).collect();
            if s == 0 {
                em_n = filter.iter().map(|f| f * f).sum();
            }

            let mut spatial: Vec<C64> = filter.iter().map(|&f| C64::new(f, 0.0)).collect();
            fft.inverse(&mut spatial);
            spatial_filters.push(spatial.iter().map(|c| c.re / sqrt_n).collect());

            let mut eo: Vec<C64> = image_fft.iter().zip(&filter).map(|(z, &f)| z * f).collect();
            fft.inverse(&mut eo);
            eo.iter_mut().for_each(|z| *z *= inv_n);
            for (i, z) in eo.iter().enumerate() {
                let a = z.norm();
                sum_an[i] += a;
                max_an[i] = max_an[i].max(a);
                sum_e[i] += z.re;
                sum_o[i] += z.im;
            }
            responses.push(eo);
        }

        let mut energy = vec![0.0; n];
        for i in 0..n {
            let x_energy = (sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]).sqrt() + bank.epsilon;
            let mean_e = sum_e[i] / x_energy;
            let mean_o = sum_o[i] / x_energy;
            for eo in &responses {
                let (e, od) = (eo[i].re, eo[i].im);
                energy[i] += e * mean_e + od * mean_o - (e * mean_o - od * mean_e).abs();
            }
        }

        // Noise energy from the finest scale's median squared amplitude.
        let mut amp_sq: Vec<f64> = responses[0].iter().map(|z| z.norm_sqr()).collect();
        let median_e2n = median(&mut amp_sq);
        let mean_e2n = -median_e2n / 0.5f64.ln();
        let noise_power = mean_e2n / em_n;

        let mut sum_an2 = 0.0;
        let mut sum_ai_aj = 0.0;
        for i in 0..n {
            for (si, fi) in spatial_filters.iter().enumerate() {
                sum_an2 += fi[i] * fi[i];
                for fj in &spatial_filters[si + 1..] {
                    sum_ai_aj += fi[i] * fj[i];
                }
            }
        }
        let est_noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_ai_aj;
        let tau = (est_noise_energy2 / 2.0).max(0.0).sqrt();
        let est_noise_energy = tau * (PI / 2.0).sqrt();
        let est_noise_sigma = ((2.0 - PI / 2.0) * tau * tau).sqrt();
        let threshold = (est_noise_energy + bank.noise_k * est_noise_sigma) / 1.7;

        // Points where a single scale dominates carry little congruency evidence.
        let spread_denom = (bank.scales.max(2) - 1) as f64;
        for i in 0..n {
            let width = (sum_an[i] / (max_an[i] + bank.epsilon) - 1.0) / spread_denom;
            let weight = 1.0 / (1.0 + ((bank.spread_cutoff - width) * bank.spread_gain).exp());
            energy_all[i] += weight * (energy[i] - threshold).max(0.0);
            an_all[i] += sum_an[i];
        }
    }

    energy_all
        .iter()
        .zip(&an_all)
        .map(|(&e, &a)| (e / (a + bank.epsilon)).clamp(0.0, 1.0))
        .collect()
}
