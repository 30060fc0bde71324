//! Gray-level histograms and cumulative distributions.

use crate::error::{Error, Result};
use crate::image::{round_half_up, ImageBuffer};

/// Per-level pixel counts over `[0, L - 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    /// Builds a histogram from raw counts; `total` is their sum.
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn levels(&self) -> usize {
        self.counts.len()
    }

    /// Number of levels with a nonzero count.
    pub fn occupied(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// Normalized cumulative distribution `D(i)` with the occupied extremes.
#[derive(Debug, Clone, PartialEq)]
pub struct Cdf {
    values: Vec<f64>,
    i_min: usize,
    i_max: usize,
}

impl Cdf {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, level: usize) -> f64 {
        self.values[level]
    }

    /// Lowest occupied level.
    pub fn i_min(&self) -> usize {
        self.i_min
    }

    /// Highest occupied level.
    pub fn i_max(&self) -> usize {
        self.i_max
    }

    /// `D(i_max) - D(i_min)`; zero exactly when one level is occupied.
    pub fn span(&self) -> f64 {
        self.values[self.i_max] - self.values[self.i_min]
    }
}

/// Quantizes one intensity to its level index, or reports it out of range.
#[inline]
pub(crate) fn level_of(value: f64, index: usize, levels: u32) -> Result<usize> {
    let q = round_half_up(value);
    let max = levels - 1;
    if q < 0.0 || q > f64::from(max) {
        return Err(Error::Range {
            value,
            index,
            max,
        });
    }
    Ok(q as usize)
}

/// Counts pixels per level after round-half-up quantization.
pub fn histogram(img: &ImageBuffer) -> Result<Histogram> {
    let levels = img.levels();
    let mut counts = vec![0u64; levels as usize];
    for (i, &v) in img.data().iter().enumerate() {
        counts[level_of(v, i, levels)?] += 1;
    }
    Ok(Histogram::from_counts(counts))
}

pub fn cdf(h: &Histogram) -> Result<Cdf> {
    if h.total == 0 {
        return Err(Error::EmptyImage);
    }
    let total = h.total as f64;
    let mut values = Vec::with_capacity(h.counts.len());
    let mut running = 0u64;
    for &c in &h.counts {
        running += c;
        values.push(running as f64 / total);
    }
    let i_min = h.counts.iter().position(|&c| c > 0).unwrap_or(0);
    let i_max = h.counts.iter().rposition(|&c| c > 0).unwrap_or(0);
    Ok(Cdf {
        values,
        i_min,
        i_max,
    })
}
