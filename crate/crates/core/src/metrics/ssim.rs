//! Structural similarity with Gaussian-weighted local statistics.
//!
//! Windows are evaluated only where they fit entirely inside the image, so the
//! map is `(w - n + 1) x (h - n + 1)` for an `n x n` window and no boundary
//! rule is involved.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;

use super::align_levels;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsimConstants {
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range `L`; `None` takes `levels - 1` from the images.
    pub dynamic_range: Option<f64>,
    pub window_size: usize,
    pub window_sigma: f64,
}

impl Default for SsimConstants {
    fn default() -> Self {
        Self {
            k1: 0.01,
            k2: 0.03,
            dynamic_range: None,
            window_size: 11,
            window_sigma: 1.5,
        }
    }
}

impl SsimConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(Error::Param("SSIM constants K1, K2 must be positive".into()));
        }
        if self.window_size % 2 == 0 || self.window_size == 0 {
            return Err(Error::Param(format!(
                "SSIM window size must be odd, got {}",
                self.window_size
            )));
        }
        if !(self.window_sigma > 0.0) {
            return Err(Error::Param("SSIM window sigma must be positive".into()));
        }
        if let Some(range) = self.dynamic_range {
            if !(range > 0.0) {
                return Err(Error::Param("SSIM dynamic range must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn range_for(&self, levels: u32) -> f64 {
        self.dynamic_range.unwrap_or(f64::from(levels - 1))
    }

    /// `(C1, C2) = ((K1 L)^2, (K2 L)^2)`.
    pub fn c1_c2(&self, levels: u32) -> (f64, f64) {
        let l = self.range_for(levels);
        ((self.k1 * l).powi(2), (self.k2 * l).powi(2))
    }

    /// Normalized separable window taps, shrunk to fit images smaller than the window.
    pub(crate) fn window(&self, width: usize, height: usize) -> Vec<f64> {
        let fit = width.min(height);
        let n = if self.window_size <= fit {
            self.window_size
        } else if fit % 2 == 1 {
            fit
        } else {
            fit - 1
        };
        let r = (n / 2) as isize;
        let denom = 2.0 * self.window_sigma * self.window_sigma;
        let mut taps: Vec<f64> = (-r..=r).map(|t| (-((t * t) as f64) / denom).exp()).collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|v| *v /= sum);
        taps
    }
}

/// Per-window SSIM values and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SsimMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub mean: f64,
}

/// Valid-mode separable filtering: output shrinks by `taps.len() - 1` per axis.
fn filter_valid(data: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let src = &data[y * w..(y + 1) * w];
        let dst = &mut rows[y * ow..(y + 1) * ow];
        for (x, d) in dst.iter_mut().enumerate() {
            *d = src[x..x + n].iter().zip(taps).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (t, &k) in taps.iter().enumerate() {
            let src = &rows[(y + t) * ow..(y + t + 1) * ow];
            let dst = &mut out[y * ow..(y + 1) * ow];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += k * s;
            }
        }
    }
    out
}

#[inline]
pub(crate) fn ssim_formula(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64, c1: f64, c2: f64) -> f64 {
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

pub fn ssim_map(x: &ImageBuffer, y: &ImageBuffer, c: &SsimConstants) -> Result<SsimMap> {
    x.check_same_shape(y)?;
    c.validate()?;
    let (x, y, levels) = align_levels(x, y);
    let (w, h) = (x.width(), x.height());
    let taps = c.window(w, h);
    let (c1, c2) = c.c1_c2(levels);

    let xs = x.data();
    let ys = y.data();
    let xx: Vec<f64> = xs.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = ys.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = xs.iter().zip(ys).map(|(a, b)| a * b).collect();

    let [mu_x, mu_y, e_xx, e_yy, e_xy] =
        [xs, ys, &xx[..], &yy[..], &xy[..]].map(|d| filter_valid(d, w, h, &taps));

    let values: Vec<f64> = (0..mu_x.len())
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = e_xx[i] - mx * mx;
            let vy = e_yy[i] - my * my;
            let cxy = e_xy[i] - mx * my;
            ssim_formula(mx, my, vx, vy, cxy, c1, c2)
        })
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let n = taps.len();
    Ok(SsimMap {
        width: w + 1 - n,
        height: h + 1 - n,
        values,
        mean,
    })
}

/// Mean SSIM.
pub fn ssim(x: &ImageBuffer, y: &ImageBuffer, c: &SsimConstants) -> Result<f64> {
    Ok(ssim_map(x, y, c)?.mean)
}
