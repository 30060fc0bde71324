//! Feature similarity: phase-congruency-weighted product of phase-congruency
//! and gradient-magnitude similarity.

use crate::error::Result;
use crate::image::ImageBuffer;

use super::align_levels;
use super::phase::phase_congruency;

const T1: f64 = 0.85;
/// Gradient similarity constant for an 8-bit range; scaled by `(range / 255)^2`.
const T2_8BIT: f64 = 160.0;

/// Box-average then subsample by `factor`, zero padding like a centred `same` convolution.
fn downsample(img: &ImageBuffer, factor: usize) -> ImageBuffer {
    if factor <= 1 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let offset = factor / 2;
    let norm = 1.0 / (factor * factor) as f64;
    let (ow, oh) = (w.div_ceil(factor), h.div_ceil(factor));
    ImageBuffer::from_fn(ow, oh, img.levels(), |ox, oy| {
        let (cx, cy) = (ox * factor + offset, oy * factor + offset);
        let mut acc = 0.0;
        for y in (cy + 1).saturating_sub(factor)..=cy.min(h - 1) {
            for x in (cx + 1).saturating_sub(factor)..=cx.min(w - 1) {
                acc += img.get(x, y);
            }
        }
        acc * norm
    })
}

/// Scharr gradient magnitude with zero padding.
fn gradient_magnitude(img: &ImageBuffer) -> Vec<f64> {
    const DX: [[f64; 3]; 3] = [[3.0, 0.0, -3.0], [10.0, 0.0, -10.0], [3.0, 0.0, -3.0]];
    let (w, h) = (img.width() as isize, img.height() as isize);
    let at = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            img.get(x as usize, y as usize)
        }
    };
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let (mut gx, mut gy) = (0.0, 0.0);
            for a in 0..3 {
                for b in 0..3 {
                    let v = at(x + 1 - b as isize, y + 1 - a as isize);
                    gx += DX[a][b] * v;
                    gy += DX[b][a] * v;
                }
            }
            out.push((gx * gx + gy * gy).sqrt() / 16.0);
        }
    }
    out
}

pub fn fsim(x: &ImageBuffer, y: &ImageBuffer) -> Result<f64> {
    x.check_same_shape(y)?;
    let (x, y, levels) = align_levels(x, y);
    let factor = ((x.width().min(x.height()) as f64 / 256.0).round() as usize).max(1);
    let (x, y) = (downsample(&x, factor), downsample(&y, factor));

    let pc_x = phase_congruency(&x);
    let pc_y = phase_congruency(&y);
    let g_x = gradient_magnitude(&x);
    let g_y = gradient_magnitude(&y);
    let range = f64::from(levels - 1);
    let t2 = T2_8BIT * (range / 255.0).powi(2);

    let mut num = 0.0;
    let mut den = 0.0;
    let mut grad_only = 0.0;
    for i in 0..pc_x.len() {
        let (p, q) = (pc_x[i], pc_y[i]);
        let (g, k) = (g_x[i], g_y[i]);
        let s_pc = (2.0 * p * q + T1) / (p * p + q * q + T1);
        let s_g = (2.0 * g * k + t2) / (g * g + k * k + t2);
        let pc_m = p.max(q);
        num += s_pc * s_g * pc_m;
        den += pc_m;
        grad_only += s_g;
    }
    if den == 0.0 {
        // No phase structure in either image: fall back to gradient similarity alone.
        return Ok(grad_only / pc_x.len() as f64);
    }
    Ok(num / den)
}
