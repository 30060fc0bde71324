//! Image quality metrics and the per-method comparison report.

use std::borrow::Cow;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{round_half_up, ImageBuffer, LEVELS_8BIT};

pub mod fsim;
pub mod phase;
pub mod ssim;

pub use fsim::fsim;
pub use phase::phase_congruency;
pub use ssim::{ssim, ssim_map, SsimConstants, SsimMap};

/// Brings a pair onto one dynamic range: unchanged when the levels agree,
/// otherwise both are rescaled to `[0, 255]`.
pub(crate) fn align_levels<'a>(
    x: &'a ImageBuffer,
    y: &'a ImageBuffer,
) -> (Cow<'a, ImageBuffer>, Cow<'a, ImageBuffer>, u32) {
    if x.levels() == y.levels() {
        return (Cow::Borrowed(x), Cow::Borrowed(y), x.levels());
    }
    (
        Cow::Owned(to_8bit_range(x)),
        Cow::Owned(to_8bit_range(y)),
        LEVELS_8BIT,
    )
}

/// Linear rescale of `[0, L - 1]` onto `[0, 255]`.
pub fn to_8bit_range(img: &ImageBuffer) -> ImageBuffer {
    let scale = 255.0 / img.max_level();
    img.map(|v| v * scale).with_levels(LEVELS_8BIT)
}

/// Shannon entropy in bits of the gray-level distribution.
///
/// Values are rounded half up and clamped into `[0, L - 1]` before counting.
pub fn information_entropy(img: &ImageBuffer) -> f64 {
    let top = img.max_level();
    let mut counts = vec![0u64; img.levels() as usize];
    for &v in img.data() {
        counts[round_half_up(v.clamp(0.0, top)) as usize] += 1;
    }
    let total = img.len() as f64;
    let entropy = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>();
    // A single occupied level gives -1 * log2(1) = -0.0.
    entropy.max(0.0)
}

/// Pearson correlation coefficient.
pub fn correlation(x: &ImageBuffer, y: &ImageBuffer) -> Result<f64> {
    x.check_same_shape(y)?;
    let (mx, my) = (x.mean(), y.mean());
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.data().iter().zip(y.data()) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Michelson-style contrast `(bright - dark) / (bright + dark)`.
pub fn contrast(bright: f64, dark: f64) -> Result<f64> {
    let sum = bright + dark;
    if sum == 0.0 {
        return Err(Error::UndefinedContrast);
    }
    Ok((bright - dark) / sum)
}

/// One `(image, method)` row of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub image_id: String,
    pub method: String,
    #[serde(rename = "IE")]
    pub ie: f64,
    #[serde(rename = "SSIM")]
    pub ssim: f64,
    #[serde(rename = "FSIM")]
    pub fsim: f64,
    /// Absent when either image is constant.
    #[serde(rename = "CORR")]
    pub corr: Option<f64>,
}

impl MetricsRow {
    /// Scores `candidate` against `reference` on their shared dynamic range.
    pub fn score(
        image_id: impl Into<String>,
        method: impl Into<String>,
        reference: &ImageBuffer,
        candidate: &ImageBuffer,
        constants: &SsimConstants,
    ) -> Result<Self> {
        reference.check_same_shape(candidate)?;
        let (r, c, _) = align_levels(reference, candidate);
        let corr = match correlation(&r, &c) {
            Ok(v) => Some(v),
            Err(Error::UndefinedCorrelation) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            image_id: image_id.into(),
            method: method.into(),
            ie: information_entropy(&c),
            ssim: ssim(&r, &c, constants)?,
            fsim: fsim(&r, &c)?,
            corr,
        })
    }
}

/// Comparison table with columns `image_id, method, IE, SSIM, FSIM, CORR`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub reference_id: String,
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn new(reference_id: impl Into<String>) -> Self {
        Self {
            reference_id: reference_id.into(),
            rows: Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        for row in &self.rows {
            out.serialize(row)?;
        }
        if self.rows.is_empty() {
            out.write_record(["image_id", "method", "IE", "SSIM", "FSIM", "CORR"])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
