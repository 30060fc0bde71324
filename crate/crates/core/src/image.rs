//! Grayscale raster shared by every stage of the pipeline.
//!
//! Intensities are kept as `f64` throughout. The `levels` field records the
//! gray-level count of the sensor the data came from (256 for 8-bit, 65536
//! for 16-bit) and is carried forward through intermediate buffers even when
//! their values leave `[0, levels - 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEVELS_8BIT: u32 = 256;
pub const LEVELS_16BIT: u32 = 65536;

/// Row-major grayscale image, origin top-left, `x` = column, `y` = row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    levels: u32,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, data: Vec<f64>, levels: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Param(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Param(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if levels < 2 {
            return Err(Error::Param(format!("levels must be >= 2, got {levels}")));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Param(format!("non-finite intensity at pixel {i}")));
        }
        Ok(Self {
            width,
            height,
            levels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64, levels: u32) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        assert!(value.is_finite());
        Self {
            width,
            height,
            levels,
            data: vec![value; width * height],
        }
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        levels: u32,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                assert!(v.is_finite(), "non-finite intensity at ({x}, {y})");
                data.push(v);
            }
        }
        Self {
            width,
            height,
            levels,
            data,
        }
    }

    /// Internal constructor for buffers whose invariants the caller already holds.
    pub(crate) fn from_parts(width: usize, height: usize, levels: u32, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self {
            width,
            height,
            levels,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn levels(&self) -> u32 {
        self.levels
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Maximum representable code, `levels - 1`.
    #[inline]
    pub fn max_level(&self) -> f64 {
        f64::from(self.levels - 1)
    }

    pub fn with_levels(mut self, levels: u32) -> Self {
        self.levels = levels;
        self
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_same_shape(&self, other: &ImageBuffer) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape {
                left_w: self.width,
                left_h: self.height,
                right_w: other.width,
                right_h: other.height,
            })
        }
    }

    /// Applies `f` to every intensity. Panics if `f` produces a non-finite value.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> ImageBuffer {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        assert!(data.iter().all(|v| v.is_finite()), "map produced non-finite intensity");
        Self::from_parts(self.width, self.height, self.levels, data)
    }

    /// Pixelwise combination of two same-shaped buffers; keeps `self.levels`.
    pub fn zip_map(
        &self,
        other: &ImageBuffer,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Result<ImageBuffer> {
        self.check_same_shape(other)?;
        let data: Vec<f64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        assert!(data.iter().all(|v| v.is_finite()), "zip_map produced non-finite intensity");
        Ok(Self::from_parts(self.width, self.height, self.levels, data))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn is_constant(&self) -> bool {
        let first = self.data[0];
        self.data.iter().all(|&v| v == first)
    }

    /// Mean intensity over the rectangle `[x0, x1) x [y0, y1)`.
    pub fn region_mean(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        assert!(x0 < x1 && x1 <= self.width && y0 < y1 && y1 <= self.height);
        let mut sum = 0.0;
        for y in y0..y1 {
            sum += self.row(y)[x0..x1].iter().sum::<f64>();
        }
        sum / ((x1 - x0) * (y1 - y0)) as f64
    }

    /// Transposed copy; used by the separable filters to reuse the row pass.
    pub(crate) fn transposed(&self) -> ImageBuffer {
        let (w, h) = (self.width, self.height);
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                out[x * h + y] = self.data[y * w + x];
            }
        }
        Self::from_parts(h, w, self.levels, out)
    }
}

/// Affine map sending `min -> 0` and `max -> 1`. A constant image maps to zeros.
pub fn normalize(img: &ImageBuffer) -> ImageBuffer {
    let (lo, hi) = (img.min(), img.max());
    let span = hi - lo;
    if span == 0.0 {
        return img.map(|_| 0.0);
    }
    img.map(|v| (v - lo) / span)
}

/// Affine map sending the occupied range onto `[0, levels - 1]`.
///
/// A constant image maps to zeros, mirroring [`normalize`].
pub fn stretch_to_levels(img: &ImageBuffer, levels: u32) -> ImageBuffer {
    let top = f64::from(levels - 1);
    normalize(img).map(|v| v * top).with_levels(levels)
}

/// Round half up to the nearest integer code.
#[inline]
pub fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// BT.601 luma. Equal channels are returned untouched so gray stays exact.
#[inline]
pub fn luminance(r: f64, g: f64, b: f64) -> f64 {
    if r == g && g == b {
        r
    } else {
        0.299 * r + 0.587 * g + 0.114 * b
    }
}
