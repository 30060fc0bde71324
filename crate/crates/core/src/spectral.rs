//! 2-D FFT plumbing over `rustfft`, shared by the convolution and
//! phase-congruency code.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub(crate) type C64 = Complex<f64>;

/// Smallest 5-smooth integer `>= n`.
pub(crate) fn next_fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Runs `fft` over every length-`len` chunk of `buf`, in parallel batches.
pub(crate) fn run_batched(fft: &Arc<dyn Fft<f64>>, buf: &mut [C64], len: usize) {
    const BATCH: usize = 16;
    buf.par_chunks_mut(len * BATCH).for_each(|chunk| fft.process(chunk));
}

pub(crate) fn transpose(src: &[C64], w: usize, h: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            out[x * h + y] = src[y * w + x];
        }
    }
    out
}

/// Forward and inverse plans for a `width x height` row-major grid.
///
/// Inverse transforms are unnormalized; callers scale by `1 / (w * h)`.
pub(crate) struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub(crate) fn new(planner: &mut FftPlanner<f64>, width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub(crate) fn forward(&self, buf: &mut Vec<C64>) {
        run_batched(&self.row_fwd, buf, self.width);
        let mut cols = transpose(buf, self.width, self.height);
        run_batched(&self.col_fwd, &mut cols, self.height);
        *buf = transpose(&cols, self.height, self.width);
    }

    pub(crate) fn inverse(&self, buf: &mut Vec<C64>) {
        let mut cols = transpose(buf, self.width, self.height);
        run_batched(&self.col_inv, &mut cols, self.height);
        *buf = transpose(&cols, self.height, self.width);
        run_batched(&self.row_inv, buf, self.width);
    }

    pub(crate) fn row_forward(&self) -> &Arc<dyn Fft<f64>> {
        &self.row_fwd
    }

    pub(crate) fn row_inverse(&self) -> &Arc<dyn Fft<f64>> {
        &self.row_inv
    }

    pub(crate) fn col_forward(&self) -> &Arc<dyn Fft<f64>> {
        &self.col_fwd
    }

    pub(crate) fn col_inverse(&self) -> &Arc<dyn Fft<f64>> {
        &self.col_inv
    }
}
